use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fading distribution `{label}`: {reason}")]
    InvalidDistribution { label: String, reason: String },

    #[error("power level {level} out of range 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("value iteration did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(
        "average cost increased with the multiplier: C({eta_low}) = {cost_low} < C({eta_high}) = {cost_high}"
    )]
    NonMonotoneCost {
        eta_low: f64,
        cost_low: f64,
        eta_high: f64,
        cost_high: f64,
    },

    #[error("steady state failed: {0}")]
    SteadyState(String),

    #[error("instance too large for enumeration: {count} policies exceeds cap {cap}")]
    InstanceTooLarge { count: u128, cap: u64 },

    #[error("simulation horizon must be at least one slot")]
    EmptyHorizon,

    #[error("malformed policy table: {0}")]
    PolicyTable(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
