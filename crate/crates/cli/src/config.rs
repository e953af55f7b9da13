//! Scenario files: TOML with sections `market`, `databases`, `dynamics`,
//! `game`, `valuation` and `sweep`.

use std::fmt;

use infomarket_core::{
    default_initial_shares, DatabaseParams, DynamicsConfig, ExternalityCurve, GameConfig, InterferenceModel,
    MarketParams,
};
use serde::{Deserialize, Serialize};

/// Anything wrong with the scenario itself, as opposed to a solver outcome.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub basic_utility: f64,
    pub sensing_utility: f64,
    pub sensing_cost: f64,
    #[serde(default = "one")]
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseSection {
    pub curve: ExternalityCurve,
    #[serde(default)]
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_share: Option<f64>,
    /// Fixed price; when every database has one, `run` plays out the
    /// subscription dynamics instead of the price game.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

fn default_draws() -> usize {
    infomarket_core::SampleConfig::default().draws
}

fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationSection {
    pub model: InterferenceModel,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_grid")]
    pub share_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub market: MarketSection,
    #[serde(default)]
    pub databases: Vec<DatabaseSection>,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valuation: Option<ValuationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// A scenario checked and converted to solver inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub market: MarketParams,
    pub databases: Vec<DatabaseParams>,
    /// Present when every database has a fixed price.
    pub prices: Option<Vec<f64>>,
    pub dynamics: DynamicsConfig,
    pub game: GameConfig,
}

impl Resolved {
    pub fn curves(&self) -> Vec<ExternalityCurve> {
        self.databases.iter().map(|d| d.curve.clone()).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.databases.iter().map(|d| d.cost).collect()
    }
}

/// Which scenario field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    Market(MarketField),
    Count,
    AllDatabases(DbField),
    Database(usize, DbField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketField {
    Basic,
    Sensing,
    SensingCost,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbField {
    Alpha,
    Beta,
    Gamma,
    Cost,
    Price,
    InitShare,
}

impl SweepTarget {
    pub fn parse(path: &str) -> Result<Self, ConfigError> {
        let unknown = || bad(format!("sweep.parameter: unknown parameter path `{path}`"));
        let parts: Vec<&str> = path.split('.').collect();
        let db_field = |s: &str| -> Option<DbField> {
            Some(match s {
                "alpha" => DbField::Alpha,
                "beta" => DbField::Beta,
                "gamma" => DbField::Gamma,
                "cost" => DbField::Cost,
                "price" => DbField::Price,
                "init_share" => DbField::InitShare,
                _ => return None,
            })
        };
        match parts.as_slice() {
            ["market", f] => Ok(SweepTarget::Market(match *f {
                "basic_utility" => MarketField::Basic,
                "sensing_utility" => MarketField::Sensing,
                "sensing_cost" => MarketField::SensingCost,
                "population" => MarketField::Population,
                _ => return Err(unknown()),
            })),
            ["databases", "count"] => Ok(SweepTarget::Count),
            ["databases", f] => db_field(f).map(SweepTarget::AllDatabases).ok_or_else(unknown),
            ["databases", n, f] => {
                let n: usize = n.parse().map_err(|_| unknown())?;
                if n == 0 {
                    return Err(bad(format!("sweep.parameter: databases are numbered from 1 in `{path}`")));
                }
                db_field(f).map(|f| SweepTarget::Database(n - 1, f)).ok_or_else(unknown)
            }
            _ => Err(unknown()),
        }
    }
}

fn set_curve(curve: &mut ExternalityCurve, field: DbField, v: f64) -> Result<(), ConfigError> {
    match curve {
        ExternalityCurve::Parametric { alpha, beta, gamma } => {
            match field {
                DbField::Alpha => *alpha = v,
                DbField::Beta => *beta = v,
                DbField::Gamma => *gamma = v,
                _ => unreachable!("curve fields only"),
            }
            Ok(())
        }
        ExternalityCurve::Tabulated { .. } => Err(bad("cannot sweep a parametric field of a tabulated curve")),
    }
}

fn set_db(db: &mut DatabaseSection, field: DbField, v: f64) -> Result<(), ConfigError> {
    match field {
        DbField::Alpha | DbField::Beta | DbField::Gamma => set_curve(&mut db.curve, field, v)?,
        DbField::Cost => db.cost = v,
        DbField::Price => db.price = Some(v),
        DbField::InitShare => db.init_share = Some(v),
    }
    Ok(())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| bad(format!("config parse error: {e}")))
    }

    /// Validates the scenario, including the sweep and valuation blocks.
    pub fn check(&self) -> Result<Resolved, ConfigError> {
        let resolved = self.resolve()?;
        if let Some(v) = &self.valuation {
            v.model.validate().map_err(|e| bad(format!("valuation.model: {e}")))?;
            if v.draws == 0 {
                return Err(bad("valuation.draws: must be at least 1"));
            }
            let g = &v.share_grid;
            if g.len() < 5 || g[0] != 0.0 || g[g.len() - 1] != 1.0 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("valuation.share_grid: need at least 5 increasing points from 0 to 1"));
            }
        }
        if let Some(s) = &self.sweep {
            let target = SweepTarget::parse(&s.parameter)?;
            if s.values.is_empty() {
                return Err(bad("sweep.values: must not be empty"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(bad("sweep.values: must be finite"));
            }
            match target {
                SweepTarget::Count => {
                    if self.databases.is_empty() {
                        return Err(bad("sweep over databases.count needs one database entry as a template"));
                    }
                    if s.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                        return Err(bad("sweep.values: database counts must be non-negative integers"));
                    }
                }
                SweepTarget::Database(i, _) if i >= self.databases.len() => {
                    return Err(bad(format!(
                        "sweep.parameter: database {} does not exist ({} configured)",
                        i + 1,
                        self.databases.len()
                    )));
                }
                _ => {}
            }
        }
        Ok(resolved)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let m = &self.market;
        let market = MarketParams::new(m.basic_utility, m.sensing_utility, m.sensing_cost, m.population)
            .map_err(|e| bad(format!("market: {e}")))?;
        let count = self.databases.len();
        let given: Vec<f64> = self.databases.iter().filter_map(|d| d.init_share).collect();
        let init = if given.is_empty() {
            default_initial_shares(count)
        } else if given.len() == count {
            if given.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("databases.init_share: initial shares must strictly increase with the database index"));
            }
            given
        } else {
            return Err(bad("databases.init_share: set it for every database or for none"));
        };
        let mut databases = Vec::with_capacity(count);
        for (i, (d, s)) in self.databases.iter().zip(init).enumerate() {
            let ctx = |e: infomarket_core::Error| bad(format!("databases[{}]: {e}", i + 1));
            d.curve.validate(&market).map_err(ctx)?;
            databases.push(DatabaseParams::new(d.curve.clone(), d.cost, s).map_err(ctx)?);
        }
        let fixed: Vec<f64> = self.databases.iter().filter_map(|d| d.price).collect();
        let prices = if fixed.is_empty() {
            None
        } else if fixed.len() == count {
            if let Some(p) = fixed.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
                return Err(bad(format!("databases.price: prices must be non-negative, got {p}")));
            }
            Some(fixed)
        } else {
            return Err(bad("databases.price: set it for every database or for none"));
        };
        self.dynamics.validate().map_err(|e| bad(format!("dynamics: {e}")))?;
        self.game.validate().map_err(|e| bad(format!("game: {e}")))?;
        Ok(Resolved {
            market,
            databases,
            prices,
            dynamics: self.dynamics,
            game: self.game,
        })
    }

    /// Copy of the scenario with the sweep target set to `value`.
    pub fn with_value(&self, target: SweepTarget, value: f64) -> Result<Scenario, ConfigError> {
        let mut s = self.clone();
        s.sweep = None;
        match target {
            SweepTarget::Market(f) => {
                let slot = match f {
                    MarketField::Basic => &mut s.market.basic_utility,
                    MarketField::Sensing => &mut s.market.sensing_utility,
                    MarketField::SensingCost => &mut s.market.sensing_cost,
                    MarketField::Population => &mut s.market.population,
                };
                *slot = value;
            }
            SweepTarget::Count => {
                let template = DatabaseSection {
                    init_share: None,
                    ..s.databases[0].clone()
                };
                s.databases = vec![template; value as usize];
            }
            SweepTarget::AllDatabases(f) => {
                for d in &mut s.databases {
                    set_db(d, f, value)?;
                }
            }
            SweepTarget::Database(i, f) => set_db(&mut s.databases[i], f, value)?,
        }
        Ok(s)
    }
}

pub const PRESETS: [(&str, &str); 5] = [
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
