//! Monte Carlo model of channel interference, used to estimate the value of
//! basic, sensing and advanced service and to fit an externality curve.
//!
//! Each channel carries interference from TV stations, from the other devices
//! on the channel, and from outside systems. A database knows the TV term and
//! the terms of its own subscribers, so its subscribers pick the channel with
//! the least known interference but still suffer the unknown part. Rates are
//! averaged per draw and the utility function is applied to the mean rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, LogNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::ExternalityCurve;
use crate::error::{Error, Result};
use crate::market::MarketShares;
use crate::numeric::grid_golden_max;

const BATCH: usize = 4096;
const GAMMA_GRID: usize = 200;
const GAMMA_FLOOR: f64 = 1e-3;
const GAMMA_TOL: f64 = 1e-10;
/// Number of standard errors tolerated by the statistical checks.
pub const SIGMAS: f64 = 3.0;
const CONCAVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    PointMass { value: f64 },
    Exponential { mean: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

/// Concrete sampler; built once so per-draw sampling skips validation.
#[derive(Debug, Clone, Copy)]
enum Sampler {
    Const(f64),
    Exp(Exp<f64>),
    Uniform(Uniform<f64>),
    LogNormal(LogNormal<f64>),
}

impl Sampler {
    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Const(v) => *v,
            Sampler::Exp(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
        }
    }
}

impl Distribution {
    fn sampler(&self, what: &str) -> Result<Sampler> {
        let bad = |why: &str| Error::InvalidParams(format!("{what}: {why}"));
        match *self {
            Distribution::PointMass { value } if value.is_finite() && value >= 0.0 => Ok(Sampler::Const(value)),
            Distribution::PointMass { .. } => Err(bad("point mass must be finite and non-negative")),
            Distribution::Exponential { mean } if mean.is_finite() && mean > 0.0 => {
                Ok(Sampler::Exp(Exp::new(1.0 / mean).map_err(|e| bad(&e.to_string()))?))
            }
            Distribution::Exponential { .. } => Err(bad("exponential mean must be positive")),
            Distribution::Uniform { low, high } if low.is_finite() && high.is_finite() && 0.0 <= low && low < high => {
                Ok(Sampler::Uniform(Uniform::new(low, high).map_err(|e| bad(&e.to_string()))?))
            }
            Distribution::Uniform { .. } => Err(bad("uniform needs 0 <= low < high")),
            Distribution::LogNormal { mu, sigma } if mu.is_finite() && sigma.is_finite() && sigma >= 0.0 => {
                Ok(Sampler::LogNormal(LogNormal::new(mu, sigma).map_err(|e| bad(&e.to_string()))?))
            }
            Distribution::LogNormal { .. } => Err(bad("log-normal needs finite mu and sigma >= 0")),
        }
    }
}

/// Rate `log2(1 + power / (noise + z))` under interference `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFn {
    pub power: f64,
    pub noise: f64,
}

impl RateFn {
    pub fn rate(&self, z: f64) -> f64 {
        (1.0 + self.power / (self.noise + z)).log2()
    }
}

impl Default for RateFn {
    fn default() -> Self {
        RateFn { power: 10.0, noise: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFn {
    #[default]
    Identity,
    Log1p,
    /// Decreasing map, only useful to exercise the assumption checks.
    Negate,
}

impl UtilityFn {
    pub fn apply(&self, r: f64) -> f64 {
        match self {
            UtilityFn::Identity => r,
            UtilityFn::Log1p => r.ln_1p(),
            UtilityFn::Negate => -r,
        }
    }

    fn derivative(&self, r: f64) -> f64 {
        match self {
            UtilityFn::Identity => 1.0,
            UtilityFn::Log1p => 1.0 / (1.0 + r),
            UtilityFn::Negate => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceModel {
    pub channels: usize,
    /// Interference from TV stations, per channel.
    pub tv: Distribution,
    /// Interference from one other device on the same channel.
    pub device: Distribution,
    /// Interference from outside systems, per channel.
    pub outside: Distribution,
    /// Devices per channel; rounded to the nearest integer.
    pub devices_per_channel: f64,
    #[serde(default)]
    pub rate: RateFn,
    #[serde(default)]
    pub utility: UtilityFn,
}

impl InterferenceModel {
    pub fn validate(&self) -> Result<()> {
        self.samplers().map(|_| ())
    }

    fn samplers(&self) -> Result<[Sampler; 3]> {
        if self.channels == 0 {
            return Err(Error::InvalidParams("channel count must be at least 1".into()));
        }
        if !(self.devices_per_channel.is_finite() && self.devices_per_channel >= 0.0) {
            return Err(Error::InvalidParams("devices per channel must be finite and non-negative".into()));
        }
        if !(self.rate.power > 0.0 && self.rate.noise > 0.0 && self.rate.power.is_finite() && self.rate.noise.is_finite()) {
            return Err(Error::InvalidParams("signal power and noise floor must be positive".into()));
        }
        Ok([self.tv.sampler("tv")?, self.device.sampler("device")?, self.outside.sampler("outside")?])
    }

    fn devices(&self) -> usize {
        self.devices_per_channel.round() as usize
    }

    /// Per-channel subscriber blocks `[start, end)` for each database, from
    /// cumulative rounding so the blocks never overlap or exceed the channel.
    fn subscriber_blocks(&self, shares: &[f64]) -> Vec<(usize, usize)> {
        let n = self.devices();
        let mut acc = 0.0;
        let mut start = 0;
        shares
            .iter()
            .map(|&s| {
                acc += s;
                let end = ((self.devices_per_channel * acc).round() as usize).clamp(start, n);
                let block = (start, end);
                start = end;
                block
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub draws: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { seed: 0, draws: 100_000 }
    }
}

/// Monte Carlo estimate of a service utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Whether two estimates agree within [`SIGMAS`] combined standard errors.
    pub fn agrees_with(&self, other: &Estimate) -> bool {
        (self.value - other.value).abs() <= SIGMAS * self.std_err.hypot(other.std_err) + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceValues {
    pub basic: Estimate,
    pub sensing: Estimate,
    pub advanced: Vec<Estimate>,
}

/// Streaming mean and squared deviations, mergeable across batches.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }

    fn estimate(&self, u: UtilityFn) -> Estimate {
        let se = if self.n > 1.0 { (self.m2 / (self.n - 1.0) / self.n).sqrt() } else { 0.0 };
        Estimate {
            value: u.apply(self.mean),
            std_err: u.derivative(self.mean).abs() * se,
        }
    }
}

fn run_batch(
    model: &InterferenceModel,
    samplers: &[Sampler; 3],
    blocks: &[(usize, usize)],
    seed: u64,
    batch: usize,
    draws: usize,
) -> Vec<Moments> {
    let k = model.channels;
    let n = model.devices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    let mut acc = vec![Moments::default(); 2 + blocks.len()];
    let mut total = vec![0.0; k];
    let mut known = vec![vec![0.0; k]; blocks.len()];
    let mut device = vec![0.0; n];
    for _ in 0..draws {
        for ch in 0..k {
            let tv = samplers[0].draw(&mut rng);
            for d in device.iter_mut() {
                *d = samplers[1].draw(&mut rng);
            }
            let out = samplers[2].draw(&mut rng);
            total[ch] = tv + device.iter().sum::<f64>() + out;
            for (m, &(a, b)) in blocks.iter().enumerate() {
                known[m][ch] = tv + device[a..b].iter().sum::<f64>();
            }
        }
        let pick = rng.random_range(0..k);
        acc[0].push(model.rate.rate(total[pick]));
        let least = total.iter().copied().fold(f64::INFINITY, f64::min);
        acc[1].push(model.rate.rate(least));
        for (m, y) in known.iter().enumerate() {
            let best = (0..k).fold(0, |i, j| if y[j] < y[i] { j } else { i });
            acc[2 + m].push(model.rate.rate(total[best]));
        }
    }
    acc
}

/// Estimates basic, sensing and per-database advanced utilities at `shares`.
///
/// Draws are split into fixed batches with one RNG stream each and merged in
/// batch order, so results do not depend on thread scheduling.
pub fn simulate_market_rates(model: &InterferenceModel, shares: &MarketShares, cfg: &SampleConfig) -> Result<ServiceValues> {
    let samplers = model.samplers()?;
    shares.validate()?;
    if cfg.draws == 0 {
        return Err(Error::InvalidParams("draw count must be at least 1".into()));
    }
    let blocks = model.subscriber_blocks(&shares.databases);
    let batches = cfg.draws.div_ceil(BATCH);
    let parts: Vec<Vec<Moments>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = BATCH.min(cfg.draws - b * BATCH);
            run_batch(model, &samplers, &blocks, cfg.seed, b, size)
        })
        .collect();
    let mut acc = vec![Moments::default(); 2 + blocks.len()];
    for part in parts {
        for (a, p) in acc.iter_mut().zip(part) {
            *a = a.merge(p);
        }
    }
    let u = model.utility;
    Ok(ServiceValues {
        basic: acc[0].estimate(u),
        sensing: acc[1].estimate(u),
        advanced: acc[2..].iter().map(|m| m.estimate(u)).collect(),
    })
}

/// One observation of the advanced-service utility at a share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub share: f64,
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub curve: ExternalityCurve,
    pub rms_residual: f64,
    pub max_residual: f64,
    /// Largest drop of a later sample below an earlier one; 0 for monotone data.
    pub isotonic_violation: f64,
    /// False when the fitted curve is flat and the exponent carries no information.
    pub gamma_identified: bool,
    pub basic: f64,
    pub sensing: f64,
    pub samples: Vec<FitSample>,
}

fn isotonic_violation(samples: &[FitSample]) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut significant = false;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            let drop = a.value - b.value;
            worst = worst.max(drop);
            if drop > SIGMAS * a.std_err.hypot(b.std_err) + 1e-12 {
                significant = true;
            }
        }
    }
    (worst, significant)
}

/// Best `(alpha, delta, sse)` for `y = alpha + delta * u` subject to
/// `lo <= alpha`, `delta >= 0`, `alpha + delta <= hi`.
fn constrained_line(u: &[f64], y: &[f64], lo: f64, hi: f64) -> (f64, f64, f64) {
    let sse = |a: f64, d: f64| u.iter().zip(y).map(|(ui, yi)| (yi - a - d * ui).powi(2)).sum::<f64>();
    let n = u.len() as f64;
    let (su, sy) = (u.iter().sum::<f64>(), y.iter().sum::<f64>());
    let suu: f64 = u.iter().map(|v| v * v).sum();
    let suy: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * suu - su * su;
    let feasible = |a: f64, d: f64| a >= lo - 1e-12 && d >= -1e-12 && a + d <= hi + 1e-12;
    if det.abs() > 1e-300 {
        let d = (n * suy - su * sy) / det;
        let a = (sy - d * su) / n;
        if feasible(a, d) {
            return (a, d, sse(a, d));
        }
    }
    let span = (hi - lo).max(0.0);
    let mut cands = Vec::with_capacity(3);
    // alpha = lo
    let d = if suu > 0.0 { (suy - lo * su) / suu } else { 0.0 };
    cands.push((lo, d.clamp(0.0, span)));
    // delta = 0
    cands.push(((sy / n).clamp(lo, hi), 0.0));
    // alpha + delta = hi: residual (y - hi) + delta (1 - u)
    let w: f64 = u.iter().map(|v| (1.0 - v).powi(2)).sum();
    let d = if w > 0.0 {
        -u.iter().zip(y).map(|(ui, yi)| (1.0 - ui) * (yi - hi)).sum::<f64>() / w
    } else {
        0.0
    };
    let d = d.clamp(0.0, span);
    cands.push((hi - d, d));
    cands
        .into_iter()
        .map(|(a, d)| (a, d, sse(a, d)))
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .expect("three candidates")
}

/// Least-squares fit of `alpha + (beta - alpha) * eta^gamma` with
/// `basic <= alpha <= beta <= sensing` and `0 < gamma <= 1`.
pub fn fit_parametric(samples: &[FitSample], basic: f64, sensing: f64) -> Result<CurveFit> {
    if samples.len() < 2 {
        return Err(Error::InvalidParams("need at least two samples".into()));
    }
    if !(basic.is_finite() && sensing.is_finite() && basic <= sensing) {
        return Err(Error::InvalidParams(format!("utility bounds [{basic}, {sensing}] are not ordered")));
    }
    let (violation, significant) = isotonic_violation(samples);
    if significant {
        return Err(Error::FitFailure(format!(
            "advanced utility falls by {violation:.4e} as the share grows, beyond {SIGMAS} standard errors"
        )));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.share).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let powered = |g: f64| -> Vec<f64> { x.iter().map(|&e| if e == 0.0 { 0.0 } else { e.powf(g) }).collect() };
    let neg_sse = |g: f64| -constrained_line(&powered(g), &y, basic, sensing).2;
    let (gamma, _) = grid_golden_max(neg_sse, GAMMA_FLOOR, 1.0, GAMMA_GRID, GAMMA_TOL);
    let (alpha, delta, sse) = constrained_line(&powered(gamma), &y, basic, sensing);
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let gamma_identified = delta > 1e-9 * scale;
    let gamma = if gamma_identified { gamma } else { 1.0 };
    let curve = ExternalityCurve::parametric(alpha, alpha + delta, gamma)?;
    let max_residual = x.iter().zip(&y).map(|(&e, &v)| (v - curve.eval(e)).abs()).fold(0.0, f64::max);
    Ok(CurveFit {
        curve,
        rms_residual: (sse / x.len() as f64).sqrt(),
        max_residual,
        isotonic_violation: violation,
        gamma_identified,
        basic,
        sensing,
        samples: samples.to_vec(),
    })
}

fn check_grid(eta_grid: &[f64]) -> Result<()> {
    if eta_grid.len() < 5 {
        return Err(Error::InvalidParams("share grid needs at least 5 points".into()));
    }
    if eta_grid[0] != 0.0 || eta_grid[eta_grid.len() - 1] != 1.0 {
        return Err(Error::InvalidParams("share grid must start at 0 and end at 1".into()));
    }
    if eta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("share grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Utility samples along the grid for a single database holding `eta`, the
/// rest on basic service. Each point reuses the same seed, so neighbouring
/// points see the same interference draws.
fn advanced_samples(model: &InterferenceModel, eta_grid: &[f64], cfg: &SampleConfig) -> Result<(Vec<FitSample>, ServiceValues)> {
    let mut samples = Vec::with_capacity(eta_grid.len());
    let mut first = None;
    for &eta in eta_grid {
        let shares = MarketShares::new(1.0 - eta, 0.0, vec![eta])?;
        let v = simulate_market_rates(model, &shares, cfg)?;
        samples.push(FitSample {
            share: eta,
            value: v.advanced[0].value,
            std_err: v.advanced[0].std_err,
        });
        first.get_or_insert(v);
    }
    Ok((samples, first.expect("non-empty grid")))
}

/// Simulates the advanced utility on `eta_grid` and fits the parametric curve,
/// bounded by the simulated basic and sensing utilities.
pub fn fit_externality_curve(model: &InterferenceModel, eta_grid: &[f64], cfg: &SampleConfig) -> Result<CurveFit> {
    check_grid(eta_grid)?;
    let (samples, base) = advanced_samples(model, eta_grid, cfg)?;
    fit_parametric(&samples, base.basic.value, base.sensing.value.max(base.basic.value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Basic and sensing utilities do not depend on how devices split.
    pub independence_ok: bool,
    /// Advanced utility is non-decreasing in the share.
    pub monotone_ok: bool,
    /// Advanced utility lies between basic and sensing.
    pub sandwich_ok: bool,
    /// The fitted curve is concave on the grid.
    pub concave_ok: bool,
    pub samples: Vec<FitSample>,
    pub fit: Option<CurveFit>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.independence_ok && self.monotone_ok && self.sandwich_ok && self.concave_ok
    }
}

pub fn validate_assumptions(model: &InterferenceModel, eta_grid: &[f64], cfg: &SampleConfig) -> Result<AssumptionReport> {
    check_grid(eta_grid)?;
    let (samples, base) = advanced_samples(model, eta_grid, cfg)?;

    // Independent draws under a very different split of the market.
    let other_cfg = SampleConfig {
        seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..*cfg
    };
    let split = MarketShares::new(0.2, 0.5, vec![0.3])?;
    let other = simulate_market_rates(model, &split, &other_cfg)?;
    let a1 = base.basic.agrees_with(&other.basic) && base.sensing.agrees_with(&other.sensing);

    let (_, significant_drop) = isotonic_violation(&samples);
    let a2 = !significant_drop;

    let a3 = samples.iter().all(|s| {
        let lo = base.basic.value - SIGMAS * base.basic.std_err.hypot(s.std_err);
        let hi = base.sensing.value + SIGMAS * base.sensing.std_err.hypot(s.std_err);
        lo - 1e-12 <= s.value && s.value <= hi + 1e-12
    });

    let fit = fit_parametric(&samples, base.basic.value, base.sensing.value.max(base.basic.value)).ok();
    let a4 = fit.as_ref().is_some_and(|f| {
        let v: Vec<f64> = eta_grid.iter().map(|&e| f.curve.eval(e)).collect();
        (2..v.len()).all(|i| {
            let s1 = (v[i - 1] - v[i - 2]) / (eta_grid[i - 1] - eta_grid[i - 2]);
            let s2 = (v[i] - v[i - 1]) / (eta_grid[i] - eta_grid[i - 1]);
            s2 <= s1 + CONCAVITY_TOL
        })
    });

    Ok(AssumptionReport {
        independence_ok: a1,
        monotone_ok: a2,
        sandwich_ok: a3,
        concave_ok: a4,
        samples,
        fit,
    })
}
