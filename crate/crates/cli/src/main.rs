mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::ConfigError;

/// Solves information markets for spectrum-sharing databases.
#[derive(Parser)]
#[command(name = "infomarket", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its equilibrium and welfare.
    Run(Common),
    /// Solve the scenario at every value of its [sweep] parameter.
    Sweep(Common),
    /// Estimate an externality curve from the scenario's interference model.
    Valuate(Common),
    /// Solve a scenario and print the equilibrium condition checks; writes nothing.
    Check(Source),
}

#[derive(Args)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: fig4, fig5, fig6, fig7 or fig8.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    source: Source,
    /// Output directory.
    #[arg(long, env = "INFOMARKET_OUT_DIR", default_value = "infomarket-out")]
    out: PathBuf,
    /// Random seed for sampling; overrides the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps and sampling; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

fn load(s: &Source) -> Result<config::Scenario> {
    commands::load(s.config.as_deref(), s.preset.as_deref())
}

fn init_workers(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(ConfigError("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Check(src) => {
            let (rows, o) = commands::check(&load(&src)?)?;
            let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            for (k, v) in rows {
                println!("{k:width$}  {v}");
            }
            Ok(if o.converged { 0 } else { EXIT_NONCONVERGED })
        }
        Command::Run(c) => {
            init_workers(c.workers)?;
            let (bundle, o) = commands::run(&load(&c.source)?, c.seed)?;
            bundle.write(&c.out)?;
            let shares: Vec<String> = o.shares.databases.iter().map(|&e| output::num(e)).collect();
            let prices: Vec<String> = o.prices.iter().map(|&p| output::num(p)).collect();
            println!("mode {} converged {} after {} iterations", o.mode, o.converged, o.iterations);
            println!("basic {} sensing {}", output::num(o.shares.basic), output::num(o.shares.sensing));
            println!("database shares [{}] prices [{}]", shares.join(", "), prices.join(", "));
            if let Some(w) = &o.welfare {
                println!("social welfare {}", output::num(w.social_welfare));
            }
            Ok(if o.converged { 0 } else { EXIT_NONCONVERGED })
        }
        Command::Sweep(c) => {
            init_workers(c.workers)?;
            let (bundle, points) = commands::sweep(&load(&c.source)?, c.seed)?;
            bundle.write(&c.out)?;
            let bad = points.iter().filter(|p| p.status() != "ok").count();
            println!("{} points, {} flagged, written to {}", points.len(), bad, c.out.display());
            Ok(if points.iter().any(|p| p.status() == "nonconverged") { EXIT_NONCONVERGED } else { 0 })
        }
        Command::Valuate(c) => {
            init_workers(c.workers)?;
            let (bundle, rep) = commands::valuate(&load(&c.source)?, c.seed)?;
            bundle.write(&c.out)?;
            println!(
                "assumptions {}; fit {}",
                if rep.all_ok() { "hold" } else { "violated" },
                if rep.fit.is_some() { "written" } else { "failed" }
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
