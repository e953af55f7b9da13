//! Price competition among databases, solved in share space: each database
//! picks the share it wants to sustain, and prices follow from the inverse
//! demand map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::ExternalityCurve;
use crate::error::{check_fraction, Error, Result};
use crate::market::{MarketParams, MarketShares};
use crate::numeric::{bisect, golden_max, linspace, solve_linear};

/// Slack before a share profile counts as overfull.
const FEASIBILITY_TOL: f64 = 1e-12;
/// Bisection tolerance when refining a best response.
const BR_ROOT_TOL: f64 = 1e-15;
/// Step for the second partials in the dominant-diagonal check.
const CURVATURE_STEP: f64 = 1e-5;
/// Grid size for the quasiconcavity scans.
const QUASICONCAVE_GRID: usize = 1000;
/// Grid size for the supermodularity scan run inside the solver.
const SUPERMODULAR_GRID: usize = 41;
/// Price deviation grid around each equilibrium price.
const DEVIATION_POINTS: usize = 201;
const DEVIATION_SPAN: f64 = 0.2;
const NEWTON_MAX_ITER: usize = 60;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// All databases respond to the previous round at once.
    Jacobi,
    /// Databases respond in turn, each seeing the latest shares.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    /// Stop when no share moves more than this in a round.
    pub br_tol: f64,
    /// Coarse grid used to bracket each best response.
    pub br_grid: usize,
    pub max_rounds: usize,
    /// Weight on the new best response; 1 means no damping.
    pub damping: f64,
    pub schedule: Schedule,
    /// Keep each database's utility between its rank neighbours' utilities.
    pub keep_rank: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            br_tol: 1e-8,
            br_grid: 512,
            max_rounds: 10_000,
            damping: 1.0,
            schedule: Schedule::GaussSeidel,
            keep_rank: true,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.br_tol > 0.0) || self.br_grid < 2 || self.max_rounds == 0 {
            return Err(Error::InvalidParams(
                "game br_tol must be positive, br_grid at least 2, max_rounds at least 1".into(),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParams(format!("damping must be in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Prices and outside-option shares that sustain a profile of database shares.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceMap {
    pub prices: Vec<f64>,
    pub sensing: f64,
    pub basic: f64,
    /// Advanced-service utility of each database at its share.
    pub qualities: Vec<f64>,
}

impl PriceMap {
    pub fn shares(&self, databases: &[f64]) -> MarketShares {
        MarketShares {
            basic: self.basic,
            sensing: self.sensing,
            databases: databases.to_vec(),
        }
    }
}

fn check_arity(count: usize, curves: &[ExternalityCurve], costs: Option<&[f64]>) -> Result<()> {
    if curves.len() != count || costs.is_some_and(|c| c.len() != count) {
        return Err(Error::InvalidParams(format!(
            "{count} shares for {} curves{}",
            curves.len(),
            costs.map(|c| format!(" and {} costs", c.len())).unwrap_or_default()
        )));
    }
    Ok(())
}

/// Inverse demand: the prices at which `shares` is a fixed point of the
/// subscription dynamics, with each database ranked by its own utility.
///
/// Sensing takes `(S - B - c - sum eta_n (g_n - B)) / (S - B)`, floored at 0;
/// basic takes the rest; database `m` charges the basic-indifference price
/// plus the utility premium over every lower-ranked database's segment.
pub fn shares_to_prices(shares: &[f64], market: &MarketParams, curves: &[ExternalityCurve]) -> Result<PriceMap> {
    check_arity(shares.len(), curves, None)?;
    if let Some(&e) = shares.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::Domain {
            what: "database share",
            value: e,
            expected: "[0, 1]",
        });
    }
    let map = price_map_unchecked(shares, market, curves);
    if map.basic < -FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "database shares {:?} leave {} for basic service",
            shares, map.basic
        )));
    }
    Ok(PriceMap {
        basic: map.basic.max(0.0),
        ..map
    })
}

fn price_map_unchecked(shares: &[f64], market: &MarketParams, curves: &[ExternalityCurve]) -> PriceMap {
    let (b, s, c) = (market.basic_utility, market.sensing_utility, market.sensing_cost);
    let qualities: Vec<f64> = curves.iter().zip(shares).map(|(g, &e)| g.eval(e)).collect();
    let weighted: f64 = shares.iter().zip(&qualities).map(|(e, g)| e * (g - b)).sum();
    let sensing = ((s - b - c - weighted) / (s - b)).max(0.0);
    let basic = 1.0 - sensing - shares.iter().sum::<f64>();
    let prices = qualities
        .iter()
        .map(|&gm| {
            let premium: f64 = shares
                .iter()
                .zip(&qualities)
                .map(|(e, &gn)| e * (gm - gn).max(0.0))
                .sum();
            basic.max(0.0) * (gm - b) + premium
        })
        .collect();
    PriceMap {
        prices,
        sensing,
        basic,
        qualities,
    }
}

/// Largest violation of the indifference conditions linking `prices` to the
/// share profile. Databases with zero share are skipped; the sensing
/// condition is an equality when some devices sense and an inequality
/// otherwise.
pub fn equilibrium_residual(shares: &MarketShares, prices: &[f64], market: &MarketParams, curves: &[ExternalityCurve]) -> f64 {
    let (b, s, c) = (market.basic_utility, market.sensing_utility, market.sensing_cost);
    let mut active: Vec<(f64, f64, f64)> = shares
        .databases
        .iter()
        .zip(curves)
        .zip(prices)
        .filter(|((&e, _), _)| e > 0.0)
        .map(|((&e, g), &p)| (g.eval(e), p, e))
        .collect();
    active.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut residual: f64 = 0.0;
    let mut boundary = shares.basic;
    let (mut g_prev, mut p_prev) = (b, 0.0);
    for &(g, p, e) in &active {
        if g > g_prev {
            residual = residual.max(((p - p_prev) / (g - g_prev) - boundary).abs());
        }
        boundary += e;
        g_prev = g;
        p_prev = p;
    }
    let top = 1.0 - shares.sensing;
    let sensing_type = (c - p_prev) / (s - g_prev);
    if shares.sensing > 0.0 {
        residual.max((sensing_type - top).abs())
    } else {
        residual.max(top - sensing_type)
    }
}

/// Profit of database `m` when the market sits at `shares`.
pub fn db_revenue(
    m: usize,
    shares: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
) -> Result<f64> {
    check_arity(shares.len(), curves, Some(costs))?;
    if m >= shares.len() {
        return Err(Error::InvalidIndex {
            index: m,
            count: shares.len(),
        });
    }
    let map = shares_to_prices(shares, market, curves)?;
    Ok((map.prices[m] - costs[m]) * shares[m] * market.population)
}

/// Revenue of `m` with its own share replaced by `x`; `-inf` when infeasible.
fn revenue_with(m: usize, x: f64, shares: &[f64], market: &MarketParams, curves: &[ExternalityCurve], costs: &[f64]) -> f64 {
    let mut s = shares.to_vec();
    s[m] = x;
    let map = price_map_unchecked(&s, market, curves);
    if map.basic < -FEASIBILITY_TOL {
        return f64::NEG_INFINITY;
    }
    (map.prices[m] - costs[m]) * x * market.population
}

/// Analytic derivative of `revenue_with` in `x`; `-inf` when infeasible.
fn revenue_slope_with(
    m: usize,
    x: f64,
    shares: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
) -> f64 {
    let (b, s, c) = (market.basic_utility, market.sensing_utility, market.sensing_cost);
    let mut sh = shares.to_vec();
    sh[m] = x;
    let map = price_map_unchecked(&sh, market, curves);
    if map.basic < -FEASIBILITY_TOL {
        return f64::NEG_INFINITY;
    }
    let gm = map.qualities[m];
    // x * g'(x), which vanishes at 0 even when the slope is infinite there.
    let elastic = if x > 0.0 { x * curves[m].slope(x) } else { 0.0 };
    let weighted: f64 = sh.iter().zip(&map.qualities).map(|(e, g)| e * (g - b)).sum();
    let d_sensing = if s - b - c - weighted > 0.0 {
        -(gm - b + elastic) / (s - b)
    } else {
        0.0
    };
    let d_basic = -d_sensing - 1.0;
    let below: f64 = sh
        .iter()
        .zip(&map.qualities)
        .enumerate()
        .filter(|&(n, (_, &g))| n != m && g < gm)
        .map(|(_, (e, _))| e)
        .sum();
    let basic = map.basic.max(0.0);
    let d_price_times_x = x * d_basic * (gm - b) + (basic + below) * elastic;
    (map.prices[m] - costs[m] + d_price_times_x) * market.population
}

/// Revenue-maximizing share for `m` on `[lo, hi]`, other shares held fixed.
fn best_response_on(
    m: usize,
    shares: &[f64],
    lo: f64,
    hi: f64,
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    grid: usize,
) -> f64 {
    if hi <= lo {
        return lo;
    }
    let r = |x: f64| revenue_with(m, x, shares, market, curves, costs);
    let dr = |x: f64| revenue_slope_with(m, x, shares, market, curves, costs);
    let xs: Vec<f64> = linspace(lo, hi, grid + 1).collect();
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let v = r(x);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let last = xs.len() - 1;
    if best_i == 0 && dr(lo) <= 0.0 {
        return lo;
    }
    if best_i == last && dr(hi) >= 0.0 {
        return hi;
    }
    let a = xs[best_i.saturating_sub(1)];
    let b = xs[(best_i + 1).min(last)];
    let (da, db) = (dr(a), dr(b));
    let candidate = if da > 0.0 && db < 0.0 {
        bisect(dr, a, b, BR_ROOT_TOL)
    } else {
        golden_max(r, a, b, BR_ROOT_TOL).0
    };
    let cv = r(candidate);
    if cv >= best_v - 1e-12 * best_v.abs() {
        candidate
    } else {
        xs[best_i]
    }
}

/// Share that maximizes database `m`'s revenue over everything the other
/// databases leave free. `shares[m]` is ignored.
pub fn best_response_share(
    m: usize,
    shares: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    cfg: &GameConfig,
) -> Result<f64> {
    check_arity(shares.len(), curves, Some(costs))?;
    if m >= shares.len() {
        return Err(Error::InvalidIndex {
            index: m,
            count: shares.len(),
        });
    }
    let free = free_share(m, shares);
    if free < -FEASIBILITY_TOL {
        return Err(Error::EmptyInterval { lo: 0.0, hi: free });
    }
    Ok(best_response_on(m, shares, 0.0, free.max(0.0), market, curves, costs, cfg.br_grid))
}

fn free_share(m: usize, shares: &[f64]) -> f64 {
    1.0 - shares.iter().enumerate().filter(|&(n, _)| n != m).map(|(_, e)| e).sum::<f64>()
}

/// Ranking of databases by utility at their shares, ties by index.
fn rank_order(shares: &[f64], curves: &[ExternalityCurve]) -> Vec<usize> {
    let q: Vec<f64> = curves.iter().zip(shares).map(|(g, &e)| g.eval(e)).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&i, &j| q[i].total_cmp(&q[j]).then(i.cmp(&j)));
    order
}

/// Interval of own shares keeping `m` between its rank neighbours' utilities,
/// intersected with the free share. Falls back to `[0, free]` when the rank
/// window is empty.
fn rank_interval(m: usize, shares: &[f64], order: &[usize], curves: &[ExternalityCurve]) -> (f64, f64) {
    let free = free_share(m, shares).max(0.0);
    let pos = order.iter().position(|&k| k == m).expect("m is ranked");
    let lo = if pos > 0 {
        let n = order[pos - 1];
        curves[m].share_for_value(curves[n].eval(shares[n]))
    } else {
        0.0
    };
    let hi = if pos + 1 < order.len() {
        let n = order[pos + 1];
        largest_share_for_value(&curves[m], curves[n].eval(shares[n]))
    } else {
        1.0
    };
    let (lo, hi) = (lo.min(free), hi.min(free));
    if lo > hi {
        (0.0, free)
    } else {
        (lo, hi)
    }
}

fn largest_share_for_value(curve: &ExternalityCurve, target: f64) -> f64 {
    if target >= curve.max_value() {
        return 1.0;
    }
    if target < curve.min_value() {
        return 0.0;
    }
    bisect(|e| if curve.eval(e) <= target { -1.0 } else { 1.0 }, 0.0, 1.0, 1e-15)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Increasing differences on the duopoly grid; `None` unless there are two databases.
    pub supermodular_ok: Option<bool>,
    pub quasiconcave_ok: bool,
    pub dominant_diagonal_ok: bool,
    pub equilibrium_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub shares: MarketShares,
    pub prices: Vec<f64>,
    pub revenues: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
    /// Largest share movement in the last round.
    pub movement: f64,
    pub diagnostics: Diagnostics,
    /// No unilateral price deviation on the check grid pays; `None` unless checked.
    pub deviation_ok: Option<bool>,
}

/// Iterated best responses in share space.
///
/// Never fails on non-convergence: the last iterate is reported with
/// `converged == false`.
pub fn solve_mscg(
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    init_shares: &[f64],
    cfg: &GameConfig,
) -> Result<NashReport> {
    cfg.validate()?;
    check_arity(init_shares.len(), curves, Some(costs))?;
    for &e in init_shares {
        check_fraction("initial share", e)?;
    }
    let m = init_shares.len();
    let order = rank_order(init_shares, curves);
    let init_shares = &feasible_start(init_shares, market, curves);
    let respond = |k: usize, shares: &[f64]| -> f64 {
        let (lo, hi) = if cfg.keep_rank {
            rank_interval(k, shares, &order, curves)
        } else {
            (0.0, free_share(k, shares).max(0.0))
        };
        best_response_on(k, shares, lo, hi, market, curves, costs, cfg.br_grid)
    };

    let mut shares = init_shares.to_vec();
    let mut rounds = 0;
    let mut movement = f64::INFINITY;
    let mut converged = m == 0;
    while !converged && rounds < cfg.max_rounds {
        rounds += 1;
        let prev = shares.clone();
        match cfg.schedule {
            Schedule::Jacobi => {
                let responses: Vec<f64> = (0..m).into_par_iter().map(|k| respond(k, &prev)).collect();
                for k in 0..m {
                    shares[k] = (1.0 - cfg.damping) * prev[k] + cfg.damping * responses[k];
                }
                // Damped joint moves can overfill the market; scale back to fit.
                let total: f64 = shares.iter().sum();
                if total > 1.0 {
                    shares.iter_mut().for_each(|e| *e /= total);
                }
            }
            Schedule::GaussSeidel => {
                for k in 0..m {
                    let r = respond(k, &shares);
                    shares[k] = (1.0 - cfg.damping) * shares[k] + cfg.damping * r;
                }
            }
        }
        movement = prev.iter().zip(&shares).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        converged = movement <= cfg.br_tol;
    }
    if m == 0 {
        movement = 0.0;
    }
    report(market, curves, costs, shares, rounds, converged, movement)
}

/// Shrinks an infeasible starting profile toward zero until the basic share
/// is non-negative. Only the rank order and starting point depend on it.
fn feasible_start(init: &[f64], market: &MarketParams, curves: &[ExternalityCurve]) -> Vec<f64> {
    let basic = |t: f64| {
        let scaled: Vec<f64> = init.iter().map(|e| e * t).collect();
        price_map_unchecked(&scaled, market, curves).basic
    };
    if basic(1.0) >= -FEASIBILITY_TOL {
        return init.to_vec();
    }
    let t = bisect(basic, 0.0, 1.0, 1e-12) * (1.0 - 1e-9);
    init.iter().map(|e| e * t).collect()
}

#[allow(clippy::too_many_arguments)]
fn report(
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    shares: Vec<f64>,
    rounds: usize,
    converged: bool,
    movement: f64,
) -> Result<NashReport> {
    let map = shares_to_prices(&shares, market, curves)?;
    let full = map.shares(&shares);
    let revenues: Vec<f64> = (0..shares.len())
        .map(|k| (map.prices[k] - costs[k]) * shares[k] * market.population)
        .collect();
    let residual = equilibrium_residual(&full, &map.prices, market, curves);
    let quasiconcave_ok = (0..shares.len()).all(|k| {
        let free = free_share(k, &shares).max(0.0);
        single_peaked(k, &shares, 0.0, free, market, curves, costs, QUASICONCAVE_GRID)
    });
    let supermodular_ok = if shares.len() == 2 {
        Some(supermodularity_check(market, curves, SUPERMODULAR_GRID)?)
    } else {
        None
    };
    Ok(NashReport {
        shares: full,
        prices: map.prices,
        revenues,
        rounds,
        converged,
        movement,
        diagnostics: Diagnostics {
            supermodular_ok,
            quasiconcave_ok,
            dominant_diagonal_ok: dominant_diagonal_check(&shares, market, curves, costs),
            equilibrium_residual: residual,
        },
        deviation_ok: None,
    })
}

/// Share equilibrium mapped back to prices, plus a unilateral price
/// deviation check: each database tries prices within 20% of its equilibrium
/// price, demand follows the subscription equilibrium continued from the
/// equilibrium shares, and the deviation must not pay.
pub fn solve_pcg(
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    init_shares: &[f64],
    cfg: &GameConfig,
) -> Result<NashReport> {
    let mut rep = solve_mscg(market, curves, costs, init_shares, cfg)?;
    rep.deviation_ok = Some(price_deviation_check(&rep, market, curves, costs));
    Ok(rep)
}

/// Subscription equilibrium sustained by `prices`, found by Newton on the
/// inverse price map starting from `start`. `None` if the branch leaves the
/// simplex or Newton stalls.
pub fn equilibrium_shares_near(
    start: &[f64],
    prices: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
) -> Option<Vec<f64>> {
    let n = start.len();
    let residual = |x: &[f64]| -> Vec<f64> {
        let map = price_map_unchecked(x, market, curves);
        map.prices.iter().zip(prices).map(|(a, b)| a - b).collect()
    };
    let mut x = start.to_vec();
    for _ in 0..NEWTON_MAX_ITER {
        let r = residual(&x);
        if r.iter().all(|v| v.abs() < NEWTON_TOL) {
            let map = price_map_unchecked(&x, market, curves);
            return (map.basic >= -FEASIBILITY_TOL && x.iter().all(|&v| (0.0..=1.0).contains(&v))).then_some(x);
        }
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let h = NEWTON_STEP.min(x[j].max(NEWTON_STEP) * 0.5);
            let mut up = x.clone();
            up[j] += h;
            let mut dn = x.clone();
            dn[j] -= h;
            let (ru, rd) = (residual(&up), residual(&dn));
            for i in 0..n {
                jac[i][j] = (ru[i] - rd[i]) / (2.0 * h);
            }
        }
        let dx = solve_linear(jac, r.iter().map(|v| -v).collect())?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi = (*xi + d).clamp(0.0, 1.0);
        }
    }
    None
}

fn price_deviation_check(rep: &NashReport, market: &MarketParams, curves: &[ExternalityCurve], costs: &[f64]) -> bool {
    let start = rep.shares.databases.clone();
    (0..rep.prices.len()).into_par_iter().all(|m| {
        let p0 = rep.prices[m];
        let base = rep.revenues[m];
        let slack = 1e-7 * base.abs().max(1e-3);
        let grid: Vec<f64> = linspace(p0 * (1.0 - DEVIATION_SPAN), p0 * (1.0 + DEVIATION_SPAN), DEVIATION_POINTS).collect();
        let mid = DEVIATION_POINTS / 2;
        // Walk outward from the equilibrium price so each solve starts on the branch.
        let walk = |idx: &mut dyn Iterator<Item = usize>| {
            let mut at = start.clone();
            for i in idx {
                let mut prices = rep.prices.clone();
                prices[m] = grid[i];
                let Some(next) = equilibrium_shares_near(&at, &prices, market, curves) else {
                    break;
                };
                if (grid[i] - costs[m]) * next[m] * market.population > base + slack {
                    return false;
                }
                at = next;
            }
            true
        };
        walk(&mut (mid..DEVIATION_POINTS)) && walk(&mut (0..mid).rev())
    })
}

/// Increasing differences of both duopoly revenues in `(eta_1, -eta_2)` on a
/// grid of feasible, rank-consistent cells.
pub fn supermodularity_check(market: &MarketParams, curves: &[ExternalityCurve], grid: usize) -> Result<bool> {
    Ok(supermodularity_margin(market, curves, grid)? >= -1e-9)
}

/// Smallest cross difference found by [`supermodularity_check`]; `+inf` when
/// no cell qualifies.
pub fn supermodularity_margin(market: &MarketParams, curves: &[ExternalityCurve], grid: usize) -> Result<f64> {
    if curves.len() != 2 {
        return Err(Error::Arity {
            expected: 2,
            got: curves.len(),
        });
    }
    let n = grid.max(2);
    let step = 1.0 / n as f64;
    let revenue = |e1: f64, e2: f64| -> Option<[f64; 2]> {
        let map = price_map_unchecked(&[e1, e2], market, curves);
        if map.basic < -FEASIBILITY_TOL {
            return None;
        }
        Some([map.prices[0] * e1, map.prices[1] * e2])
    };
    let ranked = |e1: f64, e2: f64| curves[0].eval(e1) <= curves[1].eval(e2);
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let worst = cells
        .par_iter()
        .filter_map(|&(i, j)| {
            let (a, a2) = (i as f64 * step, (i + 1) as f64 * step);
            let (b, b2) = (j as f64 * step, (j + 1) as f64 * step);
            let corners = [(a, b), (a2, b), (a, b2), (a2, b2)];
            if !corners.iter().all(|&(x, y)| ranked(x, y)) {
                return None;
            }
            let [r00, r10, r01, r11] = [
                revenue(a, b)?,
                revenue(a2, b)?,
                revenue(a, b2)?,
                revenue(a2, b2)?,
            ];
            // Cross difference in (eta_1, -eta_2) is minus the one in (eta_1, eta_2).
            let worst = (0..2)
                .map(|k| -(r11[k] - r10[k] - r01[k] + r00[k]))
                .fold(f64::INFINITY, f64::min);
            Some(worst)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(worst)
}

/// Discrete revenue derivative along `m`'s own share changes sign at most
/// once (rises, then falls) on a grid over `[0, free share]`.
pub fn quasiconcavity_check(
    m: usize,
    shares: &[f64],
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    grid: usize,
) -> Result<bool> {
    check_arity(shares.len(), curves, Some(costs))?;
    if m >= shares.len() {
        return Err(Error::InvalidIndex {
            index: m,
            count: shares.len(),
        });
    }
    let free = free_share(m, shares).max(0.0);
    Ok(single_peaked(m, shares, 0.0, free, market, curves, costs, grid))
}

#[allow(clippy::too_many_arguments)]
fn single_peaked(
    m: usize,
    shares: &[f64],
    lo: f64,
    hi: f64,
    market: &MarketParams,
    curves: &[ExternalityCurve],
    costs: &[f64],
    grid: usize,
) -> bool {
    if hi <= lo {
        return true;
    }
    let vals: Vec<f64> = linspace(lo, hi, grid + 1)
        .map(|x| revenue_with(m, x, shares, market, curves, costs))
        .filter(|v| v.is_finite())
        .collect();
    let mut falling = false;
    for w in vals.windows(2) {
        let d = w[1] - w[0];
        let tol = 1e-13 * w[0].abs().max(1.0);
        if d < -tol {
            falling = true;
        } else if d > tol && falling {
            return false;
        }
    }
    true
}

/// Second partials of every revenue at `shares` by central differences.
/// Row `m` holds the partials of database `m`'s revenue.
pub fn revenue_hessian(shares: &[f64], market: &MarketParams, curves: &[ExternalityCurve], costs: &[f64]) -> Vec<Vec<f64>> {
    let n = shares.len();
    let h = CURVATURE_STEP;
    let rev = |m: usize, s: &[f64]| revenue_with(m, s[m], s, market, curves, costs);
    let shifted = |i: usize, di: f64, j: usize, dj: f64| {
        let mut s = shares.to_vec();
        s[i] += di;
        s[j] += dj;
        s
    };
    let mut hess = vec![vec![0.0; n]; n];
    for m in 0..n {
        let mut own = shares.to_vec();
        let center = rev(m, &own);
        own[m] = shares[m] + h;
        let up = rev(m, &own);
        own[m] = shares[m] - h;
        let down = rev(m, &own);
        hess[m][m] = (up - 2.0 * center + down) / (h * h);
        for j in 0..n {
            if j == m {
                continue;
            }
            let pp = rev(m, &shifted(m, h, j, h));
            let pm = rev(m, &shifted(m, h, j, -h));
            let mp = rev(m, &shifted(m, -h, j, h));
            let mm = rev(m, &shifted(m, -h, j, -h));
            hess[m][j] = (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    hess
}

/// Dominant-diagonal condition at the supplied point: for every database,
/// minus its own curvature is at least the sum of its cross curvatures taken
/// against its own share reversed, i.e. `-H[m][m] >= sum_j -H[m][j]`.
pub fn dominant_diagonal_check(shares: &[f64], market: &MarketParams, curves: &[ExternalityCurve], costs: &[f64]) -> bool {
    dominant_diagonal_margins(shares, market, curves, costs).iter().all(|&d| d >= 0.0)
}

/// Per-database slack of [`dominant_diagonal_check`]; negative entries fail.
pub fn dominant_diagonal_margins(shares: &[f64], market: &MarketParams, curves: &[ExternalityCurve], costs: &[f64]) -> Vec<f64> {
    let hess = revenue_hessian(shares, market, curves, costs);
    hess.iter()
        .enumerate()
        .map(|(m, row)| {
            let cross: f64 = row.iter().enumerate().filter(|&(j, _)| j != m).map(|(_, v)| -v).sum();
            let margin = -row[m] - cross;
            if margin.is_finite() {
                margin
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}
