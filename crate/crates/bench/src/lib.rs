//! Fixtures shared by the solver benchmarks in `benches/`.

use infomarket_core::{
    default_initial_shares, DatabaseParams, Distribution, ExternalityCurve, InterferenceModel, MarketParams, RateFn,
    UtilityFn,
};

/// The reference market: B = 2, S = 8, c = 2, unit population.
pub fn market() -> MarketParams {
    MarketParams::new(2.0, 8.0, 2.0, 1.0).expect("valid market")
}

pub fn curve(gamma: f64) -> ExternalityCurve {
    ExternalityCurve::parametric(4.8, 6.0, gamma).expect("valid curve")
}

/// `count` identical zero-cost databases with the default initial shares.
pub fn databases(count: usize) -> Vec<DatabaseParams> {
    default_initial_shares(count)
        .into_iter()
        .map(|s| DatabaseParams::new(curve(0.4), 0.0, s).expect("valid database"))
        .collect()
}

pub fn interference_model() -> InterferenceModel {
    InterferenceModel {
        channels: 4,
        tv: Distribution::Exponential { mean: 1.0 },
        device: Distribution::Exponential { mean: 0.5 },
        outside: Distribution::PointMass { value: 0.1 },
        devices_per_channel: 2.0,
        rate: RateFn::default(),
        utility: UtilityFn::default(),
    }
}
