use thiserror::Error;

/// Errors surfaced by the library. `InterpolationThreshold` and
/// `RegimeMismatch` map to the CLI's numeric-error exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown distribution: {0}")]
    UnknownDistribution(String),

    #[error("covariance not positive definite")]
    CovarianceNotPositiveDefinite,

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("interpolation threshold: theory invalid (|c_n - 1| = {gap:.4} < {guard})")]
    InterpolationThreshold { gap: f64, guard: f64 },

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
