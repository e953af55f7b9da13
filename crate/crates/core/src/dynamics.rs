//! Slot-by-slot subscription dynamics: every device re-picks its best service
//! given last slot's shares, until the shares stop moving.

use serde::{Deserialize, Serialize};

use crate::curve::ExternalityCurve;
use crate::error::{check_fraction, Error, Result};
use crate::market::{allocation, MarketParams, MarketShares};
use crate::numeric::{bisect, linspace};

/// Step for the finite-difference slopes used to classify stability.
const STABILITY_STEP: f64 = 1e-6;
/// Points in the sign-change scan for monopoly equilibria.
const SCAN_POINTS: usize = 10_000;
const ROOT_TOL: f64 = 1e-12;
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    /// Convergence threshold on the largest share change between slots.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trajectory: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            record_trajectory: false,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams(format!("dynamics tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("dynamics max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    /// Share pinned at 0 or 1, where the update is clamped.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub shares: MarketShares,
    pub stability: Stability,
    /// Largest database share change in the final slot.
    pub residual: f64,
}

/// Outcome of running the single-database dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct MonopolyRun {
    pub point: EquilibriumPoint,
    pub slots: usize,
    /// Share after each slot, starting with the initial share. Empty unless recorded.
    pub trajectory: Vec<f64>,
}

/// Outcome of running the multi-database dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct OligopolyRun {
    pub point: EquilibriumPoint,
    pub slots: usize,
    /// Whether each database's share moved monotonically after the first slot.
    pub monotone: Vec<bool>,
    /// Shares after each slot, starting with the initial shares. Empty unless recorded.
    pub trajectory: Vec<MarketShares>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessCheck {
    pub holds: bool,
    /// Share where the left-hand side peaks.
    pub witness_eta: f64,
    pub lhs_sup: f64,
    pub kappa2: f64,
}

/// Next-slot share of a single database charging `price`.
pub fn monopoly_update(eta: f64, price: f64, market: &MarketParams, curve: &ExternalityCurve) -> Result<f64> {
    check_fraction("share", eta)?;
    if !(price >= 0.0) {
        return Err(Error::Domain {
            what: "price",
            value: price,
            expected: "[0, inf)",
        });
    }
    Ok(update_unchecked(eta, price, market, curve))
}

fn update_unchecked(eta: f64, price: f64, market: &MarketParams, curve: &ExternalityCurve) -> f64 {
    let g = curve.eval(eta);
    let (b, s, c) = (market.basic_utility, market.sensing_utility, market.sensing_cost);
    let adv_basic = if g > b { price / (g - b) } else { f64::INFINITY };
    let sens_adv = if g < s {
        (c - price) / (s - g)
    } else if price < c {
        f64::INFINITY
    } else {
        0.0
    };
    (sens_adv.min(1.0) - adv_basic).max(0.0)
}

fn drift(eta: f64, price: f64, market: &MarketParams, curve: &ExternalityCurve) -> f64 {
    update_unchecked(eta, price, market, curve) - eta
}

fn classify(eta: f64, price: f64, market: &MarketParams, curve: &ExternalityCurve) -> Stability {
    if eta <= 0.0 || eta >= 1.0 {
        return Stability::Boundary;
    }
    let lo = (eta - STABILITY_STEP).max(0.0);
    let hi = (eta + STABILITY_STEP).min(1.0);
    let slope = (drift(hi, price, market, curve) - drift(lo, price, market, curve)) / (hi - lo);
    if slope < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

fn monopoly_point(eta: f64, residual: f64, price: f64, market: &MarketParams, curve: &ExternalityCurve) -> EquilibriumPoint {
    let mut shares = allocation(market, &[price], &[curve.eval(eta)]).expect("one price per curve");
    // Report the fixed point itself; the allocation at it differs by at most the residual.
    let moved = shares.databases[0] - eta;
    shares.databases[0] = eta;
    if shares.basic >= shares.sensing {
        shares.basic += moved;
    } else {
        shares.sensing += moved;
    }
    EquilibriumPoint {
        shares,
        stability: classify(eta, price, market, curve),
        residual,
    }
}

/// Iterates the single-database update from `eta0` to a fixed point.
pub fn monopoly_iterate(
    eta0: f64,
    price: f64,
    market: &MarketParams,
    curve: &ExternalityCurve,
    cfg: &DynamicsConfig,
) -> Result<MonopolyRun> {
    cfg.validate()?;
    let mut eta = eta0;
    let mut trajectory = Vec::new();
    if cfg.record_trajectory {
        trajectory.push(eta);
    }
    let mut residual = f64::INFINITY;
    for slot in 1..=cfg.max_iter {
        let next = monopoly_update(eta, price, market, curve)?;
        residual = (next - eta).abs();
        eta = next;
        if cfg.record_trajectory {
            trajectory.push(eta);
        }
        if residual <= cfg.tol {
            return Ok(MonopolyRun {
                point: monopoly_point(eta, residual, price, market, curve),
                slots: slot,
                trajectory,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual,
        last: vec![eta],
    })
}

/// All fixed points of the single-database update on `[0, 1]`.
///
/// Sign changes of the drift on a uniform grid are refined by bisection;
/// tangential roots without a sign change are not detected.
pub fn monopoly_equilibria(price: f64, market: &MarketParams, curve: &ExternalityCurve) -> Result<Vec<EquilibriumPoint>> {
    monopoly_update(0.0, price, market, curve)?;
    let f = |e: f64| drift(e, price, market, curve);
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&l| (r - l).abs() > DEDUP_TOL) {
            roots.push(r);
        }
    };
    let grid: Vec<f64> = linspace(0.0, 1.0, SCAN_POINTS + 1).collect();
    let vals: Vec<f64> = grid.iter().map(|&e| f(e)).collect();
    for i in 0..grid.len() {
        if vals[i] == 0.0 {
            push(grid[i], &mut roots);
        } else if i + 1 < grid.len() && vals[i + 1] != 0.0 && (vals[i] < 0.0) != (vals[i + 1] < 0.0) {
            push(bisect(f, grid[i], grid[i + 1], ROOT_TOL), &mut roots);
        }
    }
    Ok(roots
        .into_iter()
        .map(|r| monopoly_point(r, f(r).abs(), price, market, curve))
        .collect())
}

/// Sufficient condition for a unique single-database equilibrium at `price`:
/// the relative curve slope, scaled by the sensing gap, stays below the
/// reciprocal of the largest sensing-advanced threshold.
pub fn check_uniqueness_condition(market: &MarketParams, curve: &ExternalityCurve, price: f64) -> UniquenessCheck {
    let (b, s, c) = (market.basic_utility, market.sensing_utility, market.sensing_cost);
    let mut lhs_sup = f64::NEG_INFINITY;
    let mut witness_eta = 0.0;
    let mut max_sens_adv = f64::NEG_INFINITY;
    for eta in linspace(0.0, 1.0, 1001) {
        let g = curve.eval(eta);
        let slope = curve.slope(eta);
        let lhs = if slope == 0.0 {
            0.0
        } else {
            slope / (g - b) * (s - b) / (s - g)
        };
        if lhs > lhs_sup {
            lhs_sup = lhs;
            witness_eta = eta;
        }
        let sens_adv = if g < s { (c - price) / (s - g) } else { f64::INFINITY };
        max_sens_adv = max_sens_adv.max(sens_adv);
    }
    let kappa2 = if max_sens_adv > 0.0 { 1.0 / max_sens_adv } else { f64::INFINITY };
    UniquenessCheck {
        holds: lhs_sup < kappa2,
        witness_eta,
        lhs_sup,
        kappa2,
    }
}

/// Next-slot shares of all services given last slot's shares.
///
/// Databases are ranked by their current advanced-service utility each slot;
/// any database undercut by a better one at no higher price gets no share.
pub fn oligopoly_update(
    shares: &MarketShares,
    prices: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
) -> Result<MarketShares> {
    shares.validate()?;
    check_arity(shares, prices, curves)?;
    let qualities: Vec<f64> = curves.iter().zip(&shares.databases).map(|(c, &e)| c.eval(e)).collect();
    allocation(market, prices, &qualities)
}

fn check_arity(shares: &MarketShares, prices: &[f64], curves: &[ExternalityCurve]) -> Result<()> {
    let m = shares.count();
    if prices.len() != m || curves.len() != m {
        return Err(Error::InvalidParams(format!(
            "{m} shares, {} prices, {} curves",
            prices.len(),
            curves.len()
        )));
    }
    Ok(())
}

/// Iterates the multi-database update from `shares0` to a fixed point.
pub fn oligopoly_iterate(
    shares0: &MarketShares,
    prices: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
    cfg: &DynamicsConfig,
) -> Result<OligopolyRun> {
    cfg.validate()?;
    shares0.validate()?;
    check_arity(shares0, prices, curves)?;
    let m = shares0.count();
    let mut cur = shares0.clone();
    let mut trajectory = Vec::new();
    if cfg.record_trajectory {
        trajectory.push(cur.clone());
    }
    // Direction of each database's last move: -1, 0 (none yet) or 1.
    let mut direction = vec![0i8; m];
    let mut monotone = vec![true; m];
    let mut residual = f64::INFINITY;
    for slot in 1..=cfg.max_iter {
        let next = oligopoly_update(&cur, prices, market, curves)?;
        residual = cur.max_diff(&next);
        if slot > 1 {
            for k in 0..m {
                let d = next.databases[k] - cur.databases[k];
                let dir = if d > 0.0 { 1 } else if d < 0.0 { -1 } else { 0 };
                if dir != 0 {
                    if direction[k] != 0 && dir != direction[k] {
                        monotone[k] = false;
                    }
                    direction[k] = dir;
                }
            }
        }
        cur = next;
        if cfg.record_trajectory {
            trajectory.push(cur.clone());
        }
        if residual <= cfg.tol {
            let stability = classify_oligopoly(&cur, prices, market, curves);
            return Ok(OligopolyRun {
                point: EquilibriumPoint {
                    shares: cur,
                    stability,
                    residual,
                },
                slots: slot,
                monotone,
                trajectory,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual,
        last: cur.databases,
    })
}

/// Stability from the spectral radius of the finite-difference Jacobian of the
/// database-share update, estimated as `||J^64||^(1/64)`.
fn classify_oligopoly(shares: &MarketShares, prices: &[f64], market: &MarketParams, curves: &[ExternalityCurve]) -> Stability {
    let m = shares.count();
    if m == 0 {
        return Stability::Stable;
    }
    if shares.databases.iter().any(|&e| e <= 0.0 || e >= 1.0) {
        return Stability::Boundary;
    }
    let step_map = |eta: &[f64]| -> Vec<f64> {
        let q: Vec<f64> = curves.iter().zip(eta).map(|(c, &e)| c.eval(e)).collect();
        allocation(market, prices, &q).expect("arity checked").databases
    };
    let radius = spectral_radius_estimate(shares, &step_map, m);
    if radius < 1.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

fn spectral_radius_estimate<F: Fn(&[f64]) -> Vec<f64>>(shares: &MarketShares, step_map: &F, m: usize) -> f64 {
    let mut jac = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut up = shares.databases.clone();
        let mut dn = shares.databases.clone();
        up[j] += STABILITY_STEP;
        dn[j] -= STABILITY_STEP;
        let (fu, fd) = (step_map(&up), step_map(&dn));
        for i in 0..m {
            jac[i][j] = (fu[i] - fd[i]) / (2.0 * STABILITY_STEP);
        }
    }
    // ||J^(2^k)|| computed in log space to avoid overflow.
    let mut power = jac;
    let mut log_scale = 0.0;
    let squarings = 6;
    for _ in 0..squarings {
        power = matmul(&power, &power);
        log_scale *= 2.0;
        let norm = max_row_sum(&power);
        if norm == 0.0 {
            return 0.0;
        }
        log_scale += norm.ln();
        for row in &mut power {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    (log_scale / (1u32 << squarings) as f64).exp()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn max_row_sum(a: &[Vec<f64>]) -> f64 {
    a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Default starting shares: proportional to rank, summing to one half, so the
/// last database starts largest.
pub fn default_initial_shares(count: usize) -> Vec<f64> {
    let total = (count * (count + 1)) as f64 / 2.0;
    (1..=count).map(|m| 0.5 * m as f64 / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn market() -> MarketParams {
        MarketParams::new(2.0, 8.0, 2.0, 1.0).unwrap()
    }

    fn curve() -> ExternalityCurve {
        ExternalityCurve::parametric(4.8, 6.0, 0.4).unwrap()
    }

    /// Drift written out from the payoff comparisons, independent of the module.
    fn oracle_drift(eta: f64, p: f64, m: &MarketParams, g: &ExternalityCurve) -> f64 {
        let gv = g.eval(eta);
        let lo = p / (gv - m.basic_utility);
        let hi = ((m.sensing_cost - p) / (m.sensing_utility - gv)).min(1.0);
        (hi - lo).max(0.0) - eta
    }

    /// Root the monotone iteration from `eta0` must reach: walk along the
    /// drift direction until its sign flips, then bisect.
    fn oracle_limit(eta0: f64, p: f64, m: &MarketParams, g: &ExternalityCurve) -> f64 {
        let d0 = oracle_drift(eta0, p, m, g);
        if d0 == 0.0 {
            return eta0;
        }
        let dir = d0.signum();
        let h = 1e-5;
        let mut a = eta0;
        loop {
            let b = (a + dir * h).clamp(0.0, 1.0);
            if b == a {
                return a;
            }
            let db = oracle_drift(b, p, m, g);
            if db == 0.0 {
                return b;
            }
            if db.signum() != dir {
                let (mut lo, mut hi) = if dir > 0.0 { (a, b) } else { (b, a) };
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if (oracle_drift(mid, p, m, g) > 0.0) == (oracle_drift(lo, p, m, g) > 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
            a = b;
        }
    }

    #[test]
    fn update_examples() {
        let (m, g) = (market(), curve());
        assert!((monopoly_update(0.5, 1.0, &m, &g).unwrap() - 0.16699).abs() < 1e-5);
        assert_eq!(monopoly_update(0.3, 2.0, &m, &g).unwrap(), 0.0);
        assert!((monopoly_update(0.0, 0.5, &m, &g).unwrap() - 0.29018).abs() < 1e-5);
        assert!(monopoly_update(1.5, 0.5, &m, &g).is_err());
    }

    #[test]
    fn iterate_examples() {
        let (m, g) = (market(), curve());
        let cfg = DynamicsConfig::default();
        let run = monopoly_iterate(0.1, 0.5, &m, &g, &cfg).unwrap();
        let eta = run.point.shares.databases[0];
        assert!((eta - 0.527).abs() < 1e-3);
        assert!((eta - oracle_limit(0.1, 0.5, &m, &g)).abs() < 1e-8);
        assert_eq!(run.point.stability, Stability::Stable);
        run.point.shares.validate().unwrap();

        let run = monopoly_iterate(0.5, 1.0, &m, &g, &cfg).unwrap();
        assert_eq!(run.point.shares.databases[0], 0.0);

        let fixed = monopoly_iterate(eta, 0.5, &m, &g, &cfg).unwrap();
        assert_eq!(fixed.slots, 1);
    }

    #[test]
    fn iterate_records_trajectory() {
        let cfg = DynamicsConfig {
            record_trajectory: true,
            ..Default::default()
        };
        let run = monopoly_iterate(0.1, 0.5, &market(), &curve(), &cfg).unwrap();
        assert_eq!(run.trajectory.len(), run.slots + 1);
        assert_eq!(run.trajectory[0], 0.1);
        assert!(run.trajectory.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn iterate_reports_non_convergence() {
        let cfg = DynamicsConfig {
            max_iter: 2,
            ..Default::default()
        };
        let err = monopoly_iterate(0.1, 0.5, &market(), &curve(), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn equilibria_examples() {
        let (m, g) = (market(), curve());
        let eq = monopoly_equilibria(0.5, &m, &g).unwrap();
        assert_eq!(eq.len(), 1);
        assert!((eq[0].shares.databases[0] - 0.527).abs() < 1e-3);
        assert_eq!(eq[0].stability, Stability::Stable);

        let eq = monopoly_equilibria(1.0, &m, &g).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].shares.databases[0], 0.0);
        assert_eq!(eq[0].stability, Stability::Boundary);

        let eq = monopoly_equilibria(2.0, &m, &g).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].shares.databases[0], 0.0);
    }

    #[test]
    fn equilibria_find_unstable_middle_root() {
        // Strong externality: zero is self-sustaining, a high root is stable,
        // and the root between them is unstable.
        let m = market();
        let m = MarketParams { sensing_cost: 5.0, ..m };
        let g = ExternalityCurve::parametric(2.2, 7.5, 1.0).unwrap();
        let eq = monopoly_equilibria(0.8, &m, &g).unwrap();
        let kinds: Vec<Stability> = eq.iter().map(|e| e.stability).collect();
        assert_eq!(kinds, vec![Stability::Boundary, Stability::Unstable, Stability::Stable]);
        let unstable = eq[1].shares.databases[0];
        for (start, expect) in [(unstable - 1e-3, 0.0), (unstable + 1e-3, eq[2].shares.databases[0])] {
            let run = monopoly_iterate(start, 0.8, &m, &g, &DynamicsConfig::default()).unwrap();
            assert!((run.point.shares.databases[0] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn uniqueness_examples() {
        let m = market();
        let lin = ExternalityCurve::parametric(4.8, 6.0, 1.0).unwrap();
        let u = check_uniqueness_condition(&m, &lin, 0.5);
        assert!(u.holds);
        assert!((u.lhs_sup - 0.9).abs() < 1e-12);
        assert_eq!(u.witness_eta, 1.0);
        assert!((u.kappa2 - 4.0 / 3.0).abs() < 1e-12);

        let u = check_uniqueness_condition(&m, &curve(), 0.5);
        assert!(!u.holds);
        assert_eq!(u.witness_eta, 0.0);

        let u = check_uniqueness_condition(&m, &ExternalityCurve::flat(4.8).unwrap(), 0.5);
        assert!(u.holds);
        assert_eq!(u.lhs_sup, 0.0);
    }

    fn duopoly_prices() -> [f64; 2] {
        [0.663_113_4, 0.709_257_2]
    }

    /// Prices that make (0.1, 0.2) an exact fixed point, from the indifference conditions.
    fn exact_duopoly_prices() -> [f64; 2] {
        let (b, s, c) = (2.0, 8.0, 2.0);
        let (g1, g2) = (curve().eval(0.1), curve().eval(0.2));
        let sensing = (s - b - c - 0.1 * (g1 - b) - 0.2 * (g2 - b)) / (s - b);
        let theta_b = 1.0 - sensing - 0.3;
        [theta_b * (g1 - b), theta_b * (g2 - b) + 0.1 * (g2 - g1)]
    }

    fn duopoly_curves() -> Vec<ExternalityCurve> {
        vec![curve(), curve()]
    }

    #[test]
    fn oligopoly_update_fixed_point_example() {
        let m = market();
        let start = MarketShares::new(0.202_308, 0.497_692, vec![0.1, 0.2]).unwrap();
        let next = oligopoly_update(&start, &duopoly_prices(), &m, &duopoly_curves()).unwrap();
        assert!((next.databases[0] - 0.1).abs() < 1e-5);
        assert!((next.databases[1] - 0.2).abs() < 1e-5);
        assert!((next.basic - 0.202_31).abs() < 1e-5);
    }

    #[test]
    fn oligopoly_update_single_database_matches_monopoly() {
        let (m, g) = (market(), curve());
        for eta in [0.0, 0.2, 0.5, 0.9] {
            let s = MarketShares::from_database_shares(vec![eta], &m).unwrap();
            let next = oligopoly_update(&s, &[0.7], &m, std::slice::from_ref(&g)).unwrap();
            let mono = monopoly_update(eta, 0.7, &m, &g).unwrap();
            assert!((next.databases[0] - mono).abs() < 1e-15);
        }
    }

    #[test]
    fn oligopoly_update_drops_dominated_database() {
        let m = market();
        let s = MarketShares::from_database_shares(vec![0.1, 0.2], &m).unwrap();
        let next = oligopoly_update(&s, &[1.9, 0.7], &m, &duopoly_curves()).unwrap();
        assert_eq!(next.databases[0], 0.0);
        let mono = monopoly_update(0.2, 0.7, &m, &curve()).unwrap();
        assert!((next.databases[1] - mono).abs() < 1e-15);
    }

    #[test]
    fn oligopoly_iterate_examples() {
        let m = market();
        let cfg = DynamicsConfig::default();
        let start = oligopoly_update(
            &MarketShares::new(0.202_308, 0.497_692, vec![0.1, 0.2]).unwrap(),
            &exact_duopoly_prices(),
            &m,
            &duopoly_curves(),
        )
        .unwrap();
        let run = oligopoly_iterate(&start, &exact_duopoly_prices(), &m, &duopoly_curves(), &cfg).unwrap();
        assert_eq!(run.slots, 1);
        assert!((run.point.shares.databases[0] - 0.1).abs() < 1e-6);
        // The interior point is a repeller at these prices.
        assert_eq!(run.point.stability, Stability::Unstable);

        // Starting with the low-utility database smaller, it loses every
        // subscriber and the other one settles on its single-database share.
        let start = MarketShares::from_database_shares(vec![0.05, 0.25], &m).unwrap();
        let run = oligopoly_iterate(&start, &duopoly_prices(), &m, &duopoly_curves(), &cfg).unwrap();
        assert_eq!(run.point.shares.databases[0], 0.0);
        let mono = monopoly_iterate(0.25, duopoly_prices()[1], &m, &curve(), &cfg).unwrap();
        assert!((run.point.shares.databases[1] - mono.point.shares.databases[0]).abs() < 1e-8);

        let s = MarketShares::from_database_shares(vec![0.1], &m).unwrap();
        let one = oligopoly_iterate(&s, &[0.5], &m, &[curve()], &cfg).unwrap();
        let mono = monopoly_iterate(0.1, 0.5, &m, &curve(), &cfg).unwrap();
        assert!((one.point.shares.databases[0] - mono.point.shares.databases[0]).abs() < 1e-8);
    }

    #[test]
    fn default_shares_are_ordered() {
        let s = default_initial_shares(4);
        assert!((s.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn iterate_matches_oracle(
            c in 0.5f64..5.0,
            alpha in 2.2f64..7.0,
            spread in 0.0f64..1.0,
            gamma in 0.1f64..1.0,
            price_frac in 0.0f64..1.0,
            eta0 in 0.0f64..1.0,
        ) {
            let m = MarketParams { sensing_cost: c, ..market() };
            let beta = alpha + spread * (7.9 - alpha);
            let g = ExternalityCurve::parametric(alpha, beta, gamma).unwrap();
            let p = price_frac * c;
            let run = monopoly_iterate(eta0, p, &m, &g, &DynamicsConfig::default()).unwrap();
            let eta = run.point.shares.databases[0];
            prop_assert!((eta - oracle_limit(eta0, p, &m, &g)).abs() < 1e-6);
            prop_assert!((run.point.shares.total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn unique_when_condition_holds(
            alpha in 2.5f64..7.0,
            spread in 0.0f64..0.6,
            price_frac in 0.0f64..1.0,
        ) {
            let m = market();
            let beta = alpha + spread * (7.9 - alpha);
            let g = ExternalityCurve::parametric(alpha, beta, 1.0).unwrap();
            let p = price_frac * m.sensing_cost;
            if check_uniqueness_condition(&m, &g, p).holds {
                prop_assert_eq!(monopoly_equilibria(p, &m, &g).unwrap().len(), 1);
            }
        }

        #[test]
        fn update_output_is_on_simplex(
            shares in prop::collection::vec(0.0f64..1.0, 1..5),
            prices in prop::collection::vec(0.0f64..3.0, 4),
        ) {
            let m = market();
            let total: f64 = shares.iter().sum();
            let dbs: Vec<f64> = shares.iter().map(|s| s / total.max(1.0)).collect();
            let k = dbs.len();
            let s = MarketShares::from_database_shares(dbs, &m).unwrap();
            let curves = vec![curve(); k];
            let next = oligopoly_update(&s, &prices[..k], &m, &curves).unwrap();
            prop_assert!((next.total() - 1.0).abs() < 1e-12);
            prop_assert!(next.databases.iter().all(|&e| e >= 0.0));
        }
    }
}
