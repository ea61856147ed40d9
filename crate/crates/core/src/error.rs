use thiserror::Error;

use crate::atomic_model::StateLabel;

pub type Result<T, E = SpamError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SpamError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state label `{0}`")]
    InvalidStateLabel(String),

    #[error("sentinel state {0} has no level structure")]
    SentinelState(StateLabel),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sequence references pulse {from} -> {to} missing from the error model")]
    MissingPulse { from: StateLabel, to: StateLabel },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("missing detection outcome for {0}")]
    MissingOutcome(&'static str),

    #[error("distributions are not separable: means differ by {separation:.3}, combined width {width:.3}")]
    Inseparable { separation: f64, width: f64 },

    #[error("inversion is singular: {0}")]
    Singular(String),

    #[error("data do not identify the parameter: {0}")]
    Unidentifiable(String),

    #[error("{events} stochastic events exceed the enumeration limit of {limit}")]
    TooManyEvents { events: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SpamError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SpamError::InvalidArgument(msg.into())
    }
}
