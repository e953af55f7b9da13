//! Single-database pricing. The database effectively picks its equilibrium
//! share; the price that sustains a share comes from the inverse demand map.

use serde::{Deserialize, Serialize};

use crate::curve::ExternalityCurve;
use crate::error::{check_fraction, Result};
use crate::market::MarketParams;
use crate::numeric::grid_golden_max;

const SEARCH_GRID: usize = 512;
const SEARCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Sensing is cheap relative to the best advanced service: some devices sense.
    LowSensingCost,
    /// Sensing is too expensive to compete with the fully subscribed service.
    HighSensingCost,
}

pub fn regime(market: &MarketParams, curve: &ExternalityCurve) -> Regime {
    if market.sensing_cost < market.sensing_utility - curve.max_value() {
        Regime::LowSensingCost
    } else {
        Regime::HighSensingCost
    }
}

/// Price that sustains share `eta`, with a flag set when it was floored at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversePrice {
    pub price: f64,
    pub floored: bool,
}

/// Type of the device indifferent between basic and advanced service when
/// the database holds `eta`, before any flooring. Sensing takes whatever
/// is left above the advanced segment, so this is capped at `1 - eta`.
fn marginal_basic_type(eta: f64, g: f64, market: &MarketParams) -> (f64, bool) {
    let (b, s, c) = (market.basic_utility, market.sensing_utility, market.sensing_cost);
    let open = (c - eta * (s - g)) / (s - b);
    if open > 1.0 - eta {
        (1.0 - eta, true)
    } else {
        (open, false)
    }
}

pub fn inverse_price_detail(eta: f64, market: &MarketParams, curve: &ExternalityCurve) -> Result<InversePrice> {
    check_fraction("share", eta)?;
    let g = curve.eval(eta);
    let (theta, _) = marginal_basic_type(eta, g, market);
    let raw = theta * (g - market.basic_utility);
    Ok(InversePrice {
        price: raw.max(0.0),
        floored: raw < 0.0,
    })
}

/// Largest price at which `eta` is an equilibrium share.
pub fn inverse_price(eta: f64, market: &MarketParams, curve: &ExternalityCurve) -> Result<f64> {
    Ok(inverse_price_detail(eta, market, curve)?.price)
}

pub fn monopoly_revenue(eta: f64, market: &MarketParams, curve: &ExternalityCurve, cost: f64) -> Result<f64> {
    Ok((inverse_price(eta, market, curve)? - cost) * eta * market.population)
}

fn revenue_unchecked(eta: f64, market: &MarketParams, curve: &ExternalityCurve, cost: f64) -> f64 {
    let g = curve.eval(eta);
    let (theta, _) = marginal_basic_type(eta, g, market);
    let price = (theta * (g - market.basic_utility)).max(0.0);
    (price - cost) * eta * market.population
}

/// Derivative of revenue in the share, per unit population.
pub fn revenue_slope(eta: f64, market: &MarketParams, curve: &ExternalityCurve, cost: f64) -> f64 {
    let (b, s) = (market.basic_utility, market.sensing_utility);
    let eta = eta.clamp(0.0, 1.0);
    let g = curve.eval(eta);
    let (theta, capped) = marginal_basic_type(eta, g, market);
    let price = theta * (g - b);
    if price <= 0.0 {
        return -cost;
    }
    if eta == 0.0 {
        return price - cost;
    }
    let dg = curve.slope(eta);
    let dtheta = if capped { -1.0 } else { (-(s - g) + eta * dg) / (s - b) };
    let dprice = dtheta * (g - b) + theta * dg;
    price - cost + eta * dprice
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonopolyResult {
    pub price: f64,
    pub share: f64,
    pub revenue: f64,
    pub regime: Regime,
    /// Revenue slope at the optimum; near zero for interior optima.
    pub foc_residual: f64,
    /// The inverse price at the optimum was negative and clamped to 0.
    pub price_floored: bool,
}

/// Revenue-maximizing price, found by searching over the equilibrium share.
pub fn optimal_price(market: &MarketParams, curve: &ExternalityCurve, cost: f64) -> MonopolyResult {
    let (mut share, mut revenue) =
        grid_golden_max(|e| revenue_unchecked(e, market, curve, cost), 0.0, 1.0, SEARCH_GRID, SEARCH_TOL);
    if revenue <= 0.0 {
        share = 0.0;
        revenue = revenue_unchecked(0.0, market, curve, cost);
    }
    let inv = inverse_price_detail(share, market, curve).expect("share in [0, 1]");
    MonopolyResult {
        price: inv.price,
        share,
        revenue,
        regime: regime(market, curve),
        foc_residual: revenue_slope(share, market, curve, cost),
        price_floored: inv.floored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{check_uniqueness_condition, monopoly_equilibria, monopoly_update};
    use proptest::prelude::*;

    fn market(c: f64) -> MarketParams {
        MarketParams::new(2.0, 8.0, c, 1.0).unwrap()
    }

    fn curve() -> ExternalityCurve {
        ExternalityCurve::parametric(4.8, 6.0, 0.4).unwrap()
    }

    fn flat() -> ExternalityCurve {
        ExternalityCurve::flat(4.8).unwrap()
    }

    #[test]
    fn regime_follows_sensing_cost() {
        assert_eq!(regime(&market(1.0), &curve()), Regime::LowSensingCost);
        assert_eq!(regime(&market(3.5), &curve()), Regime::HighSensingCost);
    }

    #[test]
    fn inverse_price_examples() {
        assert!((inverse_price(0.25, &market(1.0), &curve()).unwrap() - 0.21653).abs() < 1e-4);
        assert_eq!(inverse_price(1.0, &market(3.5), &curve()).unwrap(), 0.0);
        // High sensing cost, empty market: the largest price with zero demand
        // among sustaining prices is where the basic type meets the sensing type.
        assert!((inverse_price(0.0, &market(3.5), &flat()).unwrap() - 3.5 / 6.0 * 2.8).abs() < 1e-12);
    }

    #[test]
    fn inverse_price_is_sustained_by_dynamics() {
        let m = market(3.5);
        let g = flat();
        let p = inverse_price(0.5, &m, &g).unwrap();
        assert!((p - 0.886_666_666_666_666_7).abs() < 1e-12);
        assert!((monopoly_update(0.5, p, &m, &g).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn revenue_examples() {
        let m = market(3.5);
        assert!((monopoly_revenue(0.5, &m, &flat(), 0.0).unwrap() - 0.443_333_333_333_333_3).abs() < 1e-12);
        assert_eq!(monopoly_revenue(0.0, &m, &curve(), 0.3).unwrap(), 0.0);
        assert_eq!(monopoly_revenue(1.0, &m, &curve(), 0.0).unwrap(), 0.0);
        assert!((monopoly_revenue(1.0, &m, &curve(), 0.3).unwrap() + 0.3).abs() < 1e-15);
    }

    #[test]
    fn optimal_price_flat_curve_closed_form() {
        let r = optimal_price(&market(3.5), &flat(), 0.0);
        assert!((r.share - 3.5 / 6.4).abs() < 1e-7);
        assert!((r.price - 2.8 * (3.5 - 3.2 * 3.5 / 6.4) / 6.0).abs() < 1e-7);
        assert!((r.revenue - 0.446_614_583_333_333_3).abs() < 1e-12);
        assert!(r.foc_residual.abs() < 1e-6);
        assert_eq!(r.regime, Regime::HighSensingCost);
    }

    #[test]
    fn optimal_price_unprofitable_cost() {
        let r = optimal_price(&market(3.5), &flat(), 2.8);
        assert_eq!(r.share, 0.0);
        assert!(r.revenue <= 0.0);
    }

    #[test]
    fn optimal_price_matches_grid_oracle() {
        let m = market(2.0);
        let g = curve();
        // Revenue from the sustaining price, written out directly.
        let rev = |e: f64| {
            let gv = 4.8 + 1.2 * e.powf(0.4);
            let theta = ((2.0 - e * (8.0 - gv)) / 6.0).min(1.0 - e);
            (theta * (gv - 2.0)).max(0.0) * e
        };
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=10_000 {
            let e = i as f64 / 10_000.0;
            if rev(e) > best {
                best = rev(e);
                arg = e;
            }
        }
        let r = optimal_price(&m, &g, 0.0);
        assert!((r.share - arg).abs() < 1e-4);
        assert!(r.revenue >= best - 1e-12);
        assert!(r.foc_residual.abs() < 1e-6);
    }

    #[test]
    fn revenue_slope_matches_finite_difference() {
        for (c, cost, e) in [(2.0, 0.0, 0.3), (3.5, 0.1, 0.95), (1.0, 0.0, 0.2)] {
            let m = market(c);
            let h = 1e-6;
            let fd = (revenue_unchecked(e + h, &m, &curve(), cost) - revenue_unchecked(e - h, &m, &curve(), cost)) / (2.0 * h);
            assert!((revenue_slope(e, &m, &curve(), cost) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_price_continuous_across_regime_boundary() {
        let g = curve();
        let boundary = 8.0 - g.max_value();
        for e in [0.1, 0.4, 0.8] {
            let lo = inverse_price(e, &market(boundary - 1e-12), &g).unwrap();
            let hi = inverse_price(e, &market(boundary), &g).unwrap();
            assert!((lo - hi).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_through_dynamics_when_unique() {
        let m = market(2.0);
        let g = ExternalityCurve::parametric(4.8, 6.0, 1.0).unwrap();
        let mut checked = 0;
        for i in 1..20 {
            let e = i as f64 / 20.0;
            let p = inverse_price(e, &m, &g).unwrap();
            if !check_uniqueness_condition(&m, &g, p).holds {
                continue;
            }
            let eq = monopoly_equilibria(p, &m, &g).unwrap();
            assert_eq!(eq.len(), 1);
            assert!((eq[0].shares.databases[0] - e).abs() < 1e-6);
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn steep_curve_near_sensing_has_two_revenue_peaks() {
        // With the full-share utility close to sensing, the sustaining price
        // climbs again near full subscription and the best share is near 1.
        let m = market(0.811_747_895_749_378);
        let g = ExternalityCurve::parametric(4.8, 7.443_161_799_290_037, 0.677_195_352_225_437_5).unwrap();
        let r: Vec<f64> = (0..=1000).map(|i| revenue_unchecked(i as f64 / 1000.0, &m, &g, 0.0)).collect();
        let (arg, best) = r.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert!(arg > 900);
        assert!(r[..500].iter().cloned().fold(0.0, f64::max) < best);
        let opt = optimal_price(&m, &g, 0.0);
        assert!(opt.revenue >= best - 1e-12);
        assert!(opt.share > 0.9);
    }

    proptest! {
        #[test]
        fn revenue_is_unimodal(c in 1.0f64..3.5, gamma in 0.05f64..1.0, cost in 0.0f64..0.2) {
            let m = market(c);
            let g = ExternalityCurve::parametric(4.8, 6.0, gamma).unwrap();
            let r: Vec<f64> = (0..=1000).map(|i| revenue_unchecked(i as f64 / 1000.0, &m, &g, cost)).collect();
            let mut falling = false;
            for w in r.windows(2) {
                let d = w[1] - w[0];
                if d < -1e-13 {
                    falling = true;
                } else if d > 1e-13 {
                    prop_assert!(!falling, "revenue rises again after falling");
                }
            }
        }
    }
}
