use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("exponent matrix is not invertible (smallest singular value {0:e})")]
    NonInvertible(f64),

    #[error("eigenvalues with real part below 1/2: {0:?}")]
    EigenRealPartBelowHalf(Vec<(f64, f64)>),

    #[error("real-part clusters at {lower} and {upper} are not separated by twice the clustering tolerance {tol:e}")]
    ClusterAmbiguous { lower: f64, upper: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix power overflowed at t = {0:e}")]
    RangeOverflow(f64),

    #[error("radius {0} must exceed 1")]
    RadiusTooSmall(f64),

    #[error("model is not usable: {0}")]
    NotValidated(String),

    #[error("model is not strictly semistable: {0}")]
    ModelNotStrict(String),

    #[error("second tail index required by the range/graph formula is missing")]
    MissingSecondIndex,

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("no double-point formula for d = 1")]
    Dimension1Unsupported,

    #[error("jump threshold {0:e} leaves an infinite atom orbit")]
    ThresholdTooSmall(f64),

    #[error("box-counting slope is unstable: {0}")]
    SlopeUnstable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
