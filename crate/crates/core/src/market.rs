//! Market primitives: parameters, shares, per-device payoffs and the
//! allocation of device types to services.

use serde::{Deserialize, Serialize};

use crate::curve::ExternalityCurve;
use crate::error::{check_fraction, Error, Result};

/// Tolerance on the simplex identity of [`MarketShares`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Global market scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Utility of the free basic service (available channel list only).
    pub basic_utility: f64,
    /// Utility of a perfectly sensed channel.
    pub sensing_utility: f64,
    /// Fixed cost a device pays to sense all channels itself.
    pub sensing_cost: f64,
    /// Device population; revenues and welfare scale linearly with it.
    pub population: f64,
}

impl MarketParams {
    pub fn new(basic_utility: f64, sensing_utility: f64, sensing_cost: f64, population: f64) -> Result<Self> {
        let p = Self {
            basic_utility,
            sensing_utility,
            sensing_cost,
            population,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            basic_utility: b,
            sensing_utility: s,
            sensing_cost: c,
            population: n,
        } = *self;
        if !(b.is_finite() && s.is_finite() && b >= 0.0 && b < s) {
            return Err(Error::InvalidParams(format!("need 0 <= basic < sensing utility, got {b}, {s}")));
        }
        if !(c > 0.0) || c.is_nan() {
            return Err(Error::InvalidParams(format!("sensing cost must be positive, got {c}")));
        }
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParams(format!("population must be positive, got {n}")));
        }
        Ok(())
    }

    /// Utility gap between sensing and basic service.
    pub fn spread(&self) -> f64 {
        self.sensing_utility - self.basic_utility
    }
}

/// Per-database configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseParams {
    pub curve: ExternalityCurve,
    /// Operational cost per subscriber.
    pub cost: f64,
    /// Share at the start of the subscription dynamics.
    pub init_share: f64,
}

impl DatabaseParams {
    pub fn new(curve: ExternalityCurve, cost: f64, init_share: f64) -> Result<Self> {
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(Error::Domain {
                what: "database cost",
                value: cost,
                expected: "[0, inf)",
            });
        }
        check_fraction("initial share", init_share)?;
        Ok(Self {
            curve,
            cost,
            init_share,
        })
    }
}

/// Fractions of the device population on each service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShares {
    pub basic: f64,
    pub sensing: f64,
    /// Advanced-service share of each database, in database order.
    pub databases: Vec<f64>,
}

impl MarketShares {
    /// Builds shares and checks non-negativity and the simplex identity.
    pub fn new(basic: f64, sensing: f64, databases: Vec<f64>) -> Result<Self> {
        let s = Self {
            basic,
            sensing,
            databases,
        };
        s.validate()?;
        Ok(s)
    }

    /// Database shares with basic and sensing filling the remainder in the
    /// proportions set by the no-database split (basic below the sensing type).
    pub fn from_database_shares(databases: Vec<f64>, market: &MarketParams) -> Result<Self> {
        let used: f64 = databases.iter().sum();
        let rest = 1.0 - used;
        if rest < -SIMPLEX_TOL {
            return Err(Error::Infeasible(format!("database shares sum to {used}")));
        }
        let rest = rest.max(0.0);
        let to_basic = (market.sensing_cost / market.spread()).min(1.0);
        Self::new(rest * to_basic, rest * (1.0 - to_basic), databases)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("basic share", self.basic), ("sensing share", self.sensing)]
            .into_iter()
            .chain(self.databases.iter().map(|&v| ("database share", v)))
        {
            check_fraction(what, v)?;
        }
        let total = self.total();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Infeasible(format!("shares sum to {total}")));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.basic + self.sensing + self.databases.iter().sum::<f64>()
    }

    pub fn count(&self) -> usize {
        self.databases.len()
    }

    /// Largest absolute component-wise difference.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let mut d = (self.basic - other.basic).abs().max((self.sensing - other.sensing).abs());
        for (a, b) in self.databases.iter().zip(&other.databases) {
            d = d.max((a - b).abs());
        }
        d
    }
}

/// A device's service choice. Database indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    Basic,
    Advanced(usize),
    Sensing,
}

/// Indifference types of the single-database market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonopolyThresholds {
    /// Type indifferent between sensing and basic.
    pub sensing_basic: f64,
    /// Type indifferent between advanced and basic.
    pub advanced_basic: f64,
    /// Type indifferent between sensing and advanced.
    pub sensing_advanced: f64,
}

/// Indifference types of a quality-sorted, non-dominated multi-database market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTypes {
    /// Between basic and the lowest-quality database.
    pub basic: f64,
    /// `between[k]` separates database `k` from database `k + 1`.
    pub between: Vec<f64>,
    /// Between the highest-quality database and sensing.
    pub sensing: f64,
}

impl MarginalTypes {
    /// All types in increasing-choice order: basic, the inner types, sensing.
    pub fn all(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.between.len() + 2);
        v.push(self.basic);
        v.extend_from_slice(&self.between);
        v.push(self.sensing);
        v
    }
}

pub fn monopoly_thresholds(market: &MarketParams, price: f64, quality: f64) -> Result<MonopolyThresholds> {
    let MarketParams {
        basic_utility: b,
        sensing_utility: s,
        sensing_cost: c,
        ..
    } = *market;
    if !(quality > b && quality < s) {
        return Err(Error::Domain {
            what: "advanced-service utility",
            value: quality,
            expected: "(basic, sensing)",
        });
    }
    if !(price >= 0.0) {
        return Err(Error::Domain {
            what: "price",
            value: price,
            expected: "[0, inf)",
        });
    }
    Ok(MonopolyThresholds {
        sensing_basic: c / (s - b),
        advanced_basic: price / (quality - b),
        sensing_advanced: (c - price) / (s - quality),
    })
}

pub fn wsd_payoff(
    theta: f64,
    choice: Choice,
    market: &MarketParams,
    prices: &[f64],
    qualities: &[f64],
) -> Result<f64> {
    check_fraction("device type", theta)?;
    Ok(match choice {
        Choice::Basic => theta * market.basic_utility,
        Choice::Sensing => theta * market.sensing_utility - market.sensing_cost,
        Choice::Advanced(m) => {
            let count = prices.len().min(qualities.len());
            if m >= count {
                return Err(Error::InvalidIndex { index: m, count });
            }
            theta * qualities[m] - prices[m]
        }
    })
}

/// Payoff-maximizing service for a device of type `theta`. Ties go to the
/// first option in the order basic, databases by index, sensing.
pub fn best_choice(theta: f64, market: &MarketParams, prices: &[f64], qualities: &[f64]) -> Result<Choice> {
    check_fraction("device type", theta)?;
    check_lengths(prices, qualities)?;
    let mut best = Choice::Basic;
    let mut best_v = theta * market.basic_utility;
    for (m, (&p, &g)) in prices.iter().zip(qualities).enumerate() {
        let v = theta * g - p;
        if v > best_v {
            best = Choice::Advanced(m);
            best_v = v;
        }
    }
    if theta * market.sensing_utility - market.sensing_cost > best_v {
        best = Choice::Sensing;
    }
    Ok(best)
}

/// Marginal types for databases sorted by strictly increasing quality.
///
/// A database is dominated when a higher-quality one charges no more; such
/// profiles are rejected because the adjacent-type formulas no longer
/// describe the allocation.
pub fn oligopoly_marginal_types(market: &MarketParams, prices: &[f64], qualities: &[f64]) -> Result<MarginalTypes> {
    check_lengths(prices, qualities)?;
    let m = prices.len();
    if m == 0 {
        return Err(Error::InvalidParams("no databases".into()));
    }
    let b = market.basic_utility;
    let s = market.sensing_utility;
    if qualities[0] <= b || qualities[m - 1] >= s {
        return Err(Error::InvalidParams(
            "database utilities must lie strictly between basic and sensing".into(),
        ));
    }
    for k in 1..m {
        if qualities[k] <= qualities[k - 1] {
            return Err(Error::InvalidParams(
                "databases must be sorted by strictly increasing utility".into(),
            ));
        }
        if prices[k] <= prices[k - 1] {
            return Err(Error::Dominated { dominated: k - 1, by: k });
        }
    }
    let between = (1..m)
        .map(|k| (prices[k] - prices[k - 1]) / (qualities[k] - qualities[k - 1]))
        .collect();
    Ok(MarginalTypes {
        basic: prices[0] / (qualities[0] - b),
        between,
        sensing: (market.sensing_cost - prices[m - 1]) / (s - qualities[m - 1]),
    })
}

/// One piece of the upper envelope of payoffs over device types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub choice: Choice,
    pub from: f64,
    pub to: f64,
    /// Payoff is `slope * theta - intercept` on this piece.
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.to - self.from
    }

    pub fn is_empty(&self) -> bool {
        self.to <= self.from
    }

    /// Integral of the payoff over the piece.
    pub fn payoff_integral(&self) -> f64 {
        self.slope * (self.to * self.to - self.from * self.from) / 2.0 - self.intercept * self.len()
    }
}

/// Exact partition of device types `[0, 1]` into best-choice intervals.
///
/// Walks the upper envelope of the payoff lines: from the current line, the
/// next one is the steeper line it crosses first. Works for any price and
/// quality profile, so dominated databases simply receive no interval.
pub fn envelope(market: &MarketParams, prices: &[f64], qualities: &[f64]) -> Result<Vec<Segment>> {
    check_lengths(prices, qualities)?;
    let mut lines = Vec::with_capacity(prices.len() + 2);
    lines.push((Choice::Basic, market.basic_utility, 0.0));
    for (m, (&p, &g)) in prices.iter().zip(qualities).enumerate() {
        lines.push((Choice::Advanced(m), g, p));
    }
    lines.push((Choice::Sensing, market.sensing_utility, market.sensing_cost));

    // Best line just to the right of 0: highest payoff, ties to the steeper.
    let mut cur = 0;
    for i in 1..lines.len() {
        let (v, vc) = (-lines[i].2, -lines[cur].2);
        if v > vc || (v == vc && lines[i].1 > lines[cur].1) {
            cur = i;
        }
    }

    let mut segs = Vec::new();
    let mut t = 0.0;
    loop {
        let (choice, slope, intercept) = lines[cur];
        let mut next: Option<(usize, f64)> = None;
        for (i, &(_, sl, ic)) in lines.iter().enumerate() {
            if sl <= slope {
                continue;
            }
            let x = ((ic - intercept) / (sl - slope)).max(t);
            let better = match next {
                None => true,
                Some((j, xj)) => x < xj || (x == xj && sl > lines[j].1),
            };
            if better {
                next = Some((i, x));
            }
        }
        match next {
            Some((i, x)) if x < 1.0 => {
                if x > t {
                    segs.push(Segment { choice, from: t, to: x, slope, intercept });
                }
                t = x;
                cur = i;
            }
            _ => {
                if t < 1.0 {
                    segs.push(Segment { choice, from: t, to: 1.0, slope, intercept });
                }
                return Ok(segs);
            }
        }
    }
}

/// Shares implied by the best-choice partition of device types.
pub fn allocation(market: &MarketParams, prices: &[f64], qualities: &[f64]) -> Result<MarketShares> {
    let segs = envelope(market, prices, qualities)?;
    Ok(shares_from_segments(&segs, prices.len()))
}

pub(crate) fn shares_from_segments(segs: &[Segment], count: usize) -> MarketShares {
    let mut shares = MarketShares {
        basic: 0.0,
        sensing: 0.0,
        databases: vec![0.0; count],
    };
    for s in segs {
        match s.choice {
            Choice::Basic => shares.basic += s.len(),
            Choice::Sensing => shares.sensing += s.len(),
            Choice::Advanced(m) => shares.databases[m] += s.len(),
        }
    }
    shares
}

fn check_lengths(prices: &[f64], qualities: &[f64]) -> Result<()> {
    if prices.len() != qualities.len() {
        return Err(Error::InvalidParams(format!(
            "{} prices for {} databases",
            prices.len(),
            qualities.len()
        )));
    }
    Ok(())
}
