//! The subcommands: solve one scenario, sweep a parameter, estimate a curve
//! from an interference model, or just check a file.

use std::path::Path;

use anyhow::{anyhow, Result};
use infomarket_core::{
    check_uniqueness_condition, dominant_diagonal_check, oligopoly_iterate, quasiconcavity_check, social_welfare,
    supermodularity_check, solve_market, equilibrium_residual, validate_assumptions, AssumptionReport,
    Error as CoreError, ExternalityCurve, MarketShares, SampleConfig, Stability, WelfareReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, Resolved, Scenario, SweepTarget};
use crate::output::{flag, header, num, opt_num, table, Bundle};

pub const DEFAULT_SEED: u64 = 1;
/// Largest acceptable gap between reported prices and the prices the shares imply.
pub const CONSISTENCY_TOL: f64 = 1e-8;
const SUPERMODULAR_GRID: usize = 100;
const QUASICONCAVE_GRID: usize = 1000;

/// Result of solving one scenario, in either mode.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// "game" when databases compete on price, "dynamics" for fixed prices.
    pub mode: &'static str,
    pub shares: MarketShares,
    pub prices: Vec<f64>,
    pub qualities: Vec<f64>,
    pub revenues: Vec<f64>,
    /// Missing when the dynamics never settled.
    pub welfare: Option<WelfareReport>,
    pub converged: bool,
    pub iterations: usize,
    /// Last share movement.
    pub residual: f64,
    /// How far the prices are from sustaining the shares.
    pub consistency_residual: f64,
    pub stability: Option<Stability>,
    pub deviation_ok: Option<bool>,
    pub trajectory: Vec<MarketShares>,
}

pub fn solve(r: &Resolved) -> Result<Outcome> {
    let curves = r.curves();
    let costs = r.costs();
    let qualities = |shares: &MarketShares| -> Vec<f64> {
        curves.iter().zip(&shares.databases).map(|(c, &e)| c.eval(e)).collect()
    };
    let Some(prices) = &r.prices else {
        let rep = solve_market(&r.market, &r.databases, &r.game)?;
        return Ok(Outcome {
            mode: "game",
            qualities: qualities(&rep.shares),
            consistency_residual: rep.diagnostics.equilibrium_residual,
            shares: rep.shares,
            prices: rep.prices,
            revenues: rep.revenues,
            welfare: Some(rep.welfare),
            converged: rep.converged,
            iterations: rep.rounds,
            residual: rep.movement,
            stability: None,
            deviation_ok: rep.deviation_ok,
            trajectory: vec![],
        });
    };
    let init: Vec<f64> = r.databases.iter().map(|d| d.init_share).collect();
    let start = MarketShares::from_database_shares(init, &r.market)?;
    let revenues = |shares: &MarketShares| -> Vec<f64> {
        prices
            .iter()
            .zip(&costs)
            .zip(&shares.databases)
            .map(|((p, c), e)| (p - c) * e * r.market.population)
            .collect()
    };
    match oligopoly_iterate(&start, prices, &r.market, &curves, &r.dynamics) {
        Ok(run) => {
            let shares = run.point.shares;
            let welfare = social_welfare(&shares, prices, &r.market, &curves, &costs)?;
            Ok(Outcome {
                mode: "dynamics",
                qualities: qualities(&shares),
                revenues: revenues(&shares),
                consistency_residual: equilibrium_residual(&shares, prices, &r.market, &curves),
                shares,
                prices: prices.clone(),
                welfare: Some(welfare),
                converged: true,
                iterations: run.slots,
                residual: run.point.residual,
                stability: Some(run.point.stability),
                deviation_ok: None,
                trajectory: run.trajectory,
            })
        }
        Err(CoreError::NonConvergence {
            iterations,
            residual,
            last,
        }) => {
            let shares = MarketShares::from_database_shares(last, &r.market)?;
            Ok(Outcome {
                mode: "dynamics",
                qualities: qualities(&shares),
                revenues: revenues(&shares),
                consistency_residual: equilibrium_residual(&shares, prices, &r.market, &curves),
                shares,
                prices: prices.clone(),
                welfare: None,
                converged: false,
                iterations,
                residual,
                stability: None,
                deviation_ok: None,
                trajectory: vec![],
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn stability_name(s: Option<Stability>) -> String {
    match s {
        Some(Stability::Stable) => "stable".into(),
        Some(Stability::Unstable) => "unstable".into(),
        Some(Stability::Boundary) => "boundary".into(),
        None => String::new(),
    }
}

pub fn equilibrium_csv(o: &Outcome) -> String {
    let h = header(&["service", "share", "price", "quality", "revenue", "converged", "residual"]);
    let tail = |share: f64, price: String, quality: String, revenue: String| {
        vec![num(share), price, quality, revenue, flag(o.converged), num(o.residual)]
    };
    let mut rows = Vec::new();
    let mut push = |name: String, cells: Vec<String>| {
        let mut row = vec![name];
        row.extend(cells);
        rows.push(row);
    };
    push("basic".into(), tail(o.shares.basic, String::new(), String::new(), String::new()));
    push("sensing".into(), tail(o.shares.sensing, String::new(), String::new(), String::new()));
    for (i, &e) in o.shares.databases.iter().enumerate() {
        push(
            format!("db{}", i + 1),
            tail(e, num(o.prices[i]), num(o.qualities[i]), num(o.revenues[i])),
        );
    }
    table(&h, &rows)
}

pub fn summary_csv(o: &Outcome) -> String {
    let rows = vec![
        vec!["mode".into(), o.mode.to_string()],
        vec!["converged".into(), flag(o.converged)],
        vec!["iterations".into(), o.iterations.to_string()],
        vec!["residual".into(), num(o.residual)],
        vec!["consistency_residual".into(), num(o.consistency_residual)],
        vec!["stability".into(), stability_name(o.stability)],
        vec!["deviation_ok".into(), o.deviation_ok.map(flag).unwrap_or_default()],
    ];
    table(&header(&["key", "value"]), &rows)
}

pub fn welfare_csv(o: &Outcome) -> String {
    let mut rows = Vec::new();
    let w = o.welfare.as_ref();
    let mut add = |k: String, v: Option<f64>| rows.push(vec![k, opt_num(v)]);
    add("consumer_surplus".into(), w.map(|w| w.consumer_surplus));
    add("total_db_revenue".into(), w.map(|w| w.total_db_revenue));
    add("social_welfare".into(), w.map(|w| w.social_welfare));
    add("surplus_basic".into(), w.map(|w| w.breakdown.basic));
    add("surplus_sensing".into(), w.map(|w| w.breakdown.sensing));
    for i in 0..o.prices.len() {
        add(format!("surplus_db{}", i + 1), w.map(|w| w.breakdown.advanced[i]));
    }
    table(&header(&["component", "value"]), &rows)
}

pub fn trajectory_csv(o: &Outcome) -> String {
    let mut h = header(&["slot", "basic", "sensing"]);
    h.extend((1..=o.prices.len()).map(|i| format!("db{i}")));
    let rows: Vec<Vec<String>> = o
        .trajectory
        .iter()
        .enumerate()
        .map(|(slot, s)| {
            let mut row = vec![slot.to_string(), num(s.basic), num(s.sensing)];
            row.extend(s.databases.iter().map(|&e| num(e)));
            row
        })
        .collect();
    table(&h, &rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    scenario: Scenario,
}

/// The scenario as actually solved: defaults filled in, including the
/// initial shares.
fn manifest(command: &str, scenario: &Scenario, resolved: &Resolved, seed: u64) -> String {
    let mut s = scenario.clone();
    for (d, r) in s.databases.iter_mut().zip(&resolved.databases) {
        d.init_share = Some(r.init_share);
    }
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        scenario: s,
    };
    toml::to_string(&m).expect("manifest serializes")
}

/// Seed from the command line, else the scenario, else [`DEFAULT_SEED`].
pub fn effective_seed(scenario: &Scenario, cli: Option<u64>) -> u64 {
    cli.or(scenario.valuation.as_ref().and_then(|v| v.seed)).unwrap_or(DEFAULT_SEED)
}

/// Everything `run` writes, plus the outcome for the exit code.
pub fn run(scenario: &Scenario, seed: Option<u64>) -> Result<(Bundle, Outcome)> {
    let resolved = scenario.check()?;
    let outcome = solve(&resolved)?;
    let mut b = Bundle::default();
    b.add("equilibrium.csv", equilibrium_csv(&outcome));
    b.add("summary.csv", summary_csv(&outcome));
    b.add("welfare.csv", welfare_csv(&outcome));
    if !outcome.trajectory.is_empty() {
        b.add("trajectory.csv", trajectory_csv(&outcome));
    }
    b.add("manifest.toml", manifest("run", scenario, &resolved, effective_seed(scenario, seed)));
    Ok((b, outcome))
}

/// One row of a sweep.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: std::result::Result<Outcome, String>,
}

impl SweepPoint {
    pub fn status(&self) -> &'static str {
        match &self.outcome {
            Ok(o) if o.converged => "ok",
            Ok(_) => "nonconverged",
            Err(_) => "error",
        }
    }
}

pub fn sweep_points(scenario: &Scenario) -> Result<Vec<SweepPoint>> {
    scenario.check()?;
    let plan = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError("sweep: the scenario has no [sweep] section".into()))?;
    let target = SweepTarget::parse(&plan.parameter)?;
    let points = plan
        .values
        .par_iter()
        .map(|&value| {
            let outcome = scenario
                .with_value(target, value)
                .map_err(anyhow::Error::from)
                .and_then(|s| Ok(s.resolve()?))
                .and_then(|r| solve(&r))
                .map_err(|e| format!("{e:#}"));
            SweepPoint { value, outcome }
        })
        .collect();
    Ok(points)
}

/// Long format: one row per sweep value and database, or a single row with an
/// empty database column when there is no database or the point failed.
pub fn sweep_csv(parameter: &str, points: &[SweepPoint]) -> String {
    let h = header(&[
        parameter,
        "database",
        "status",
        "price",
        "share",
        "revenue",
        "basic",
        "sensing",
        "consumer_surplus",
        "total_db_revenue",
        "social_welfare",
        "iterations",
        "consistency_residual",
        "consistency_ok",
        "deviation_ok",
        "message",
    ]);
    let mut rows = Vec::new();
    for p in points {
        match &p.outcome {
            Ok(o) => {
                let w = o.welfare.as_ref();
                let common = |db: String, price: String, share: String, revenue: String| {
                    vec![
                        num(p.value),
                        db,
                        p.status().into(),
                        price,
                        share,
                        revenue,
                        num(o.shares.basic),
                        num(o.shares.sensing),
                        opt_num(w.map(|w| w.consumer_surplus)),
                        opt_num(w.map(|w| w.total_db_revenue)),
                        opt_num(w.map(|w| w.social_welfare)),
                        o.iterations.to_string(),
                        num(o.consistency_residual),
                        flag(o.consistency_residual <= CONSISTENCY_TOL),
                        o.deviation_ok.map(flag).unwrap_or_default(),
                        String::new(),
                    ]
                };
                if o.prices.is_empty() {
                    rows.push(common(String::new(), String::new(), String::new(), String::new()));
                }
                for i in 0..o.prices.len() {
                    rows.push(common(
                        (i + 1).to_string(),
                        num(o.prices[i]),
                        num(o.shares.databases[i]),
                        num(o.revenues[i]),
                    ));
                }
            }
            Err(msg) => {
                let mut row = vec![num(p.value), String::new(), p.status().into()];
                row.extend(std::iter::repeat_n(String::new(), 12));
                row.push(msg.clone());
                rows.push(row);
            }
        }
    }
    table(&h, &rows)
}

pub fn sweep(scenario: &Scenario, seed: Option<u64>) -> Result<(Bundle, Vec<SweepPoint>)> {
    let points = sweep_points(scenario)?;
    let resolved = scenario.resolve()?;
    let parameter = &scenario.sweep.as_ref().expect("checked").parameter;
    let mut b = Bundle::default();
    b.add("sweep.csv", sweep_csv(parameter, &points));
    b.add("manifest.toml", manifest("sweep", scenario, &resolved, effective_seed(scenario, seed)));
    Ok((b, points))
}

fn curve_params(c: &ExternalityCurve) -> [Option<f64>; 3] {
    match c {
        ExternalityCurve::Parametric { alpha, beta, gamma } => [Some(*alpha), Some(*beta), Some(*gamma)],
        _ => [None; 3],
    }
}

pub fn valuation_csvs(rep: &AssumptionReport) -> (String, String, String) {
    let samples = table(
        &header(&["share", "value", "std_err"]),
        &rep.samples
            .iter()
            .map(|s| vec![num(s.share), num(s.value), num(s.std_err)])
            .collect::<Vec<_>>(),
    );
    let fit = rep.fit.as_ref();
    let [alpha, beta, gamma] = fit.map(|f| curve_params(&f.curve)).unwrap_or([None; 3]);
    let fit_rows = vec![
        vec!["fitted".into(), flag(fit.is_some())],
        vec!["alpha".into(), opt_num(alpha)],
        vec!["beta".into(), opt_num(beta)],
        vec!["gamma".into(), opt_num(gamma)],
        vec!["gamma_identified".into(), fit.map(|f| flag(f.gamma_identified)).unwrap_or_default()],
        vec!["basic".into(), opt_num(fit.map(|f| f.basic))],
        vec!["sensing".into(), opt_num(fit.map(|f| f.sensing))],
        vec!["rms_residual".into(), opt_num(fit.map(|f| f.rms_residual))],
        vec!["max_residual".into(), opt_num(fit.map(|f| f.max_residual))],
        vec!["isotonic_violation".into(), opt_num(fit.map(|f| f.isotonic_violation))],
    ];
    let checks = vec![
        vec!["independence".into(), flag(rep.independence_ok)],
        vec!["monotone".into(), flag(rep.monotone_ok)],
        vec!["sandwich".into(), flag(rep.sandwich_ok)],
        vec!["concave".into(), flag(rep.concave_ok)],
    ];
    (
        samples,
        table(&header(&["key", "value"]), &fit_rows),
        table(&header(&["assumption", "ok"]), &checks),
    )
}

pub fn valuate(scenario: &Scenario, seed: Option<u64>) -> Result<(Bundle, AssumptionReport)> {
    let resolved = scenario.check()?;
    let v = scenario
        .valuation
        .as_ref()
        .ok_or_else(|| ConfigError("valuate: the scenario has no [valuation] section".into()))?;
    let seed = effective_seed(scenario, seed);
    let cfg = SampleConfig { seed, draws: v.draws };
    let rep = validate_assumptions(&v.model, &v.share_grid, &cfg)?;
    let (samples, fit, checks) = valuation_csvs(&rep);
    let mut b = Bundle::default();
    b.add("valuation_samples.csv", samples);
    b.add("valuation_fit.csv", fit);
    b.add("assumptions.csv", checks);
    b.add("manifest.toml", manifest("valuate", scenario, &resolved, seed));
    Ok((b, rep))
}

/// The condition checks at the scenario's solution: uniqueness of the
/// subscription fixed point per database, supermodularity for duopolies,
/// quasiconcavity of each revenue in its own share, the dominant diagonal,
/// and the price consistency residual.
pub fn diagnose(r: &Resolved, o: &Outcome) -> Result<Vec<(String, String)>> {
    let curves = r.curves();
    let costs = r.costs();
    let count = curves.len();
    let mut out = vec![
        ("mode".to_string(), o.mode.to_string()),
        ("converged".into(), flag(o.converged)),
        ("iterations".into(), o.iterations.to_string()),
    ];
    for (i, c) in curves.iter().enumerate() {
        let u = check_uniqueness_condition(&r.market, c, o.prices[i]);
        out.push((format!("uniqueness_db{}", i + 1), flag(u.holds)));
    }
    let supermodular = if count == 2 {
        flag(supermodularity_check(&r.market, &curves, SUPERMODULAR_GRID)?)
    } else {
        String::new()
    };
    out.push(("supermodular".into(), supermodular));
    for i in 0..count {
        let ok = quasiconcavity_check(i, &o.shares.databases, &r.market, &curves, &costs, QUASICONCAVE_GRID)?;
        out.push((format!("quasiconcave_db{}", i + 1), flag(ok)));
    }
    if count > 0 {
        out.push((
            "dominant_diagonal".into(),
            flag(dominant_diagonal_check(&o.shares.databases, &r.market, &curves, &costs)),
        ));
    }
    out.push(("consistency_residual".into(), num(o.consistency_residual)));
    out.push(("consistency_ok".into(), flag(o.consistency_residual <= CONSISTENCY_TOL)));
    if let Some(d) = o.deviation_ok {
        out.push(("no_profitable_deviation".into(), flag(d)));
    }
    Ok(out)
}

pub fn check(scenario: &Scenario) -> Result<(Vec<(String, String)>, Outcome)> {
    let resolved = scenario.check()?;
    let outcome = solve(&resolved)?;
    Ok((diagnose(&resolved, &outcome)?, outcome))
}

/// Loads a scenario from a file or a built-in preset.
pub fn load(config: Option<&Path>, preset: Option<&str>) -> Result<Scenario> {
    let text = match (config, preset) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => crate::config::preset(name)
            .ok_or_else(|| ConfigError(format!("unknown preset `{name}`")))?
            .to_string(),
        _ => return Err(anyhow!(ConfigError("give exactly one of --config and --preset".into()))),
    };
    Ok(Scenario::parse(&text)?)
}
