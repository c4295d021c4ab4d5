use thiserror::Error;

/// Errors raised by constructions, certification and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("minor enumeration budget exceeded: {required} minors > {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("not totally non-singular: {0}")]
    NotTotallyNonSingular(String),

    #[error("complement construction failed after {retries} retries: {reason}")]
    ComplementFailed { retries: usize, reason: String },

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
