use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point set")]
    EmptyPointSet,
    #[error("separation radius undefined for fewer than two points")]
    SeparationUndefined,
    #[error("duplicate points {first} and {second} (distance {distance:e})")]
    DuplicatePoint {
        first: usize,
        second: usize,
        distance: f64,
    },
    #[error("point {index} lies outside the domain")]
    OutsideDomain { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel mode {mode} is incompatible with this operation: {reason}")]
    ModeIncompatible { mode: &'static str, reason: String },
    #[error("insufficient smoothness: {0}")]
    InsufficientSmoothness(String),
    #[error("gram not positive definite (condition estimate {condition:e})")]
    NotPositiveDefinite { condition: f64 },
    #[error("power function defined for interpolation only")]
    PowerFunctionRequiresInterpolation,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("structure certification failed: {0}")]
    CertificationFailed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
