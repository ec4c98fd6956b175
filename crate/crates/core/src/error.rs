use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distribution has no points")]
    EmptyDistribution,

    #[error("matrix is not positive (semi)definite: {0}")]
    NotPositiveDefinite(String),

    #[error("gradient is zero; inner loop has converged")]
    ZeroGradient,

    #[error("estimator failure: {0}")]
    Estimator(String),

    #[error("constraint violated: value {value} exceeds radius {epsilon}")]
    ConstraintViolation { value: f64, epsilon: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corrupt or incompatible file: {0}")]
    Format(String),

    #[error(
        "checksum mismatch in {0}; the file is corrupted, re-run the estimation to regenerate it"
    )]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
