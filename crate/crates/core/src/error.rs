use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid externality curve: {0}")]
    InvalidCurve(String),

    #[error("database index {index} out of range for {count} databases")]
    InvalidIndex { index: usize, count: usize },

    #[error("database {dominated} is dominated by database {by} (lower quality, price not lower)")]
    Dominated { dominated: usize, by: usize },

    #[error("share profile is infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("empty feasible interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("operation requires exactly {expected} databases, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("curve fit failed: {0}")]
    FitFailure(String),

    #[error("shares are inconsistent with prices: {0}")]
    Inconsistent(String),
}

pub(crate) fn check_fraction(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            expected: "[0, 1]",
        })
    }
}
