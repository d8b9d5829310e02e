use thiserror::Error;

/// Errors produced by model construction, evaluation and parsing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inadmissible step size: delta {delta} with rate norm bound {bound} (delta * bound must be <= 1)")]
    InadmissibleStep { delta: f64, bound: f64 },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("operator certification failed: {0}")]
    CertificationFailed(String),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
