use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("relay power must be non-negative, got {0}")]
    NegativePower(f64),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("network is not {kind}-regular; no nontrivial equilibrium price exists")]
    NotRegular { kind: &'static str },

    #[error("trace too short for rate estimation: {got} steps, need at least {need}")]
    TooFewSteps { got: usize, need: usize },

    #[error("empty report")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
