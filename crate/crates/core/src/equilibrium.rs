//! Full two-stage solve for one market: price equilibrium, shares, welfare.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{allocation, DatabaseParams, MarketParams, MarketShares};
use crate::oligopoly::{solve_pcg, Diagnostics, GameConfig};
use crate::welfare::{social_welfare, WelfareReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub shares: MarketShares,
    pub prices: Vec<f64>,
    pub revenues: Vec<f64>,
    pub welfare: WelfareReport,
    pub converged: bool,
    pub rounds: usize,
    pub movement: f64,
    pub diagnostics: Diagnostics,
    pub deviation_ok: Option<bool>,
}

/// Solves the price competition among `databases` and accounts welfare at
/// the result. With no databases the market splits between basic and sensing.
pub fn solve_market(market: &MarketParams, databases: &[DatabaseParams], cfg: &GameConfig) -> Result<EquilibriumReport> {
    market.validate()?;
    for d in databases {
        d.curve.validate(market)?;
    }
    if databases.is_empty() {
        let shares = allocation(market, &[], &[])?;
        let welfare = social_welfare(&shares, &[], market, &[], &[])?;
        return Ok(EquilibriumReport {
            shares,
            prices: vec![],
            revenues: vec![],
            welfare,
            converged: true,
            rounds: 0,
            movement: 0.0,
            diagnostics: Diagnostics {
                supermodular_ok: None,
                quasiconcave_ok: true,
                dominant_diagonal_ok: true,
                equilibrium_residual: 0.0,
            },
            deviation_ok: None,
        });
    }
    let curves: Vec<_> = databases.iter().map(|d| d.curve.clone()).collect();
    let costs: Vec<f64> = databases.iter().map(|d| d.cost).collect();
    let init: Vec<f64> = databases.iter().map(|d| d.init_share).collect();
    let rep = solve_pcg(market, &curves, &costs, &init, cfg)?;
    let welfare = social_welfare(&rep.shares, &rep.prices, market, &curves, &costs).map_err(|e| match e {
        Error::Inconsistent(msg) => Error::Inconsistent(format!("solver output: {msg}")),
        other => other,
    })?;
    Ok(EquilibriumReport {
        shares: rep.shares,
        prices: rep.prices,
        revenues: rep.revenues,
        welfare,
        converged: rep.converged,
        rounds: rep.rounds,
        movement: rep.movement,
        diagnostics: rep.diagnostics,
        deviation_ok: rep.deviation_ok,
    })
}
