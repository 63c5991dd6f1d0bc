use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("derivative order {0} exceeds the supported maximum of 3")]
    OrderTooHigh(usize),

    #[error("jet layout is missing a derivative required by {0}")]
    MissingDerivative(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid quadrature request: {0}")]
    Quadrature(String),

    #[error("unsupported Sobol dimension {0} (table covers 1..=32)")]
    UnsupportedDimension(usize),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("invalid loss settings: {0}")]
    Loss(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing reference: {0}")]
    MissingReference(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
