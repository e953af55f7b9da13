//! Welfare accounting at a market equilibrium: device payoffs integrated over
//! types, database revenues, and their sum.

use serde::{Deserialize, Serialize};

use crate::curve::ExternalityCurve;
use crate::error::{Error, Result};
use crate::market::{envelope, shares_from_segments, Choice, MarketParams, MarketShares, Segment};

/// Allowed gap between the stated equilibrium and the shares implied by prices.
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// Consumer surplus split by service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusBreakdown {
    pub basic: f64,
    pub sensing: f64,
    pub advanced: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub consumer_surplus: f64,
    pub total_db_revenue: f64,
    pub social_welfare: f64,
    pub revenues: Vec<f64>,
    pub breakdown: SurplusBreakdown,
}

fn breakdown_of(segs: &[Segment], count: usize, population: f64) -> SurplusBreakdown {
    let mut out = SurplusBreakdown {
        basic: 0.0,
        sensing: 0.0,
        advanced: vec![0.0; count],
    };
    for seg in segs {
        let v = seg.payoff_integral() * population;
        match seg.choice {
            Choice::Basic => out.basic += v,
            Choice::Sensing => out.sensing += v,
            Choice::Advanced(m) => out.advanced[m] += v,
        }
    }
    out
}

fn total(b: &SurplusBreakdown) -> f64 {
    b.basic + b.sensing + b.advanced.iter().sum::<f64>()
}

/// Segments for `prices` at the utilities the equilibrium implies, after
/// checking the prices really sustain that equilibrium.
fn consistent_segments(
    equilibrium: &MarketShares,
    prices: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
) -> Result<Vec<Segment>> {
    let count = equilibrium.count();
    if prices.len() != count || curves.len() != count {
        return Err(Error::Arity {
            expected: count,
            got: if prices.len() != count { prices.len() } else { curves.len() },
        });
    }
    let qualities: Vec<f64> = curves.iter().zip(&equilibrium.databases).map(|(c, &e)| c.eval(e)).collect();
    let segs = envelope(market, prices, &qualities)?;
    let implied = shares_from_segments(&segs, count);
    let gap = implied.max_diff(equilibrium);
    if gap > CONSISTENCY_TOL {
        return Err(Error::Inconsistent(format!(
            "prices imply shares {:?}, off by {gap:.3e} from the stated equilibrium",
            implied
        )));
    }
    Ok(segs)
}

pub fn consumer_surplus(
    equilibrium: &MarketShares,
    prices: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
) -> Result<f64> {
    let segs = consistent_segments(equilibrium, prices, market, curves)?;
    Ok(total(&breakdown_of(&segs, prices.len(), market.population)))
}

pub fn social_welfare(
    equilibrium: &MarketShares,
    prices: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
) -> Result<WelfareReport> {
    if costs.len() != prices.len() {
        return Err(Error::Arity {
            expected: prices.len(),
            got: costs.len(),
        });
    }
    let segs = consistent_segments(equilibrium, prices, market, curves)?;
    let breakdown = breakdown_of(&segs, prices.len(), market.population);
    let revenues: Vec<f64> = prices
        .iter()
        .zip(costs)
        .zip(&equilibrium.databases)
        .map(|((p, c), e)| (p - c) * e * market.population)
        .collect();
    let consumer_surplus = total(&breakdown);
    let total_db_revenue = revenues.iter().sum();
    Ok(WelfareReport {
        consumer_surplus,
        total_db_revenue,
        social_welfare: consumer_surplus + total_db_revenue,
        revenues,
        breakdown,
    })
}
