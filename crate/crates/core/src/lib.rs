#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod curve;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod market;
pub mod monopoly;
pub mod numeric;
pub mod oligopoly;
pub mod valuation;
pub mod welfare;

pub use curve::ExternalityCurve;
pub use error::{Error, Result};
pub use market::{
    allocation, best_choice, envelope, monopoly_thresholds, oligopoly_marginal_types, wsd_payoff, Choice,
    DatabaseParams, MarginalTypes, MarketParams, MarketShares, MonopolyThresholds, Segment,
};
pub use dynamics::{
    check_uniqueness_condition, default_initial_shares, monopoly_equilibria, monopoly_iterate, monopoly_update,
    oligopoly_iterate, oligopoly_update, DynamicsConfig, EquilibriumPoint, MonopolyRun, OligopolyRun, Stability,
    UniquenessCheck,
};
pub use monopoly::{inverse_price, monopoly_revenue, optimal_price, MonopolyResult, Regime};
pub use oligopoly::{
    best_response_share, db_revenue, dominant_diagonal_check, quasiconcavity_check, shares_to_prices, solve_mscg,
    solve_pcg, supermodularity_check, equilibrium_residual, Diagnostics, GameConfig, NashReport, PriceMap, Schedule,
};
pub use welfare::{consumer_surplus, social_welfare, SurplusBreakdown, WelfareReport};
pub use valuation::{
    fit_externality_curve, fit_parametric, simulate_market_rates, validate_assumptions, AssumptionReport, CurveFit,
    Distribution, Estimate, FitSample, InterferenceModel, RateFn, SampleConfig, ServiceValues, UtilityFn,
};
pub use equilibrium::{solve_market, EquilibriumReport};
