use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows} rows, row {row} has {cols} entries)")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("matrix dimension {0} is below 2")]
    DimensionTooSmall(usize),

    #[error("determinant {0} is not +1 or -1")]
    DeterminantNotUnit(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("polynomial has zero constant term")]
    ZeroConstantTerm,

    #[error("numerical root modulus {modulus} lies within tolerance {tol} of the unit circle but is not on it")]
    ToleranceConflict { modulus: f64, tol: f64 },

    #[error("requested subspace has dimension 0")]
    MissingSubspace,

    #[error("exact mean unavailable for this observable")]
    ExactUnavailable,

    #[error("no closed-form distribution function for this observable")]
    AnalyticUnavailable,

    #[error("operation supports only one-dimensional observables, got ell = {0}")]
    UnsupportedDimension(usize),

    #[error("weights sum to {sum}, expected 1")]
    WeightSumMismatch { sum: f64 },

    #[error("orbit length {length} is shorter than {required} (10 x lag cutoff)")]
    InsufficientLength { length: usize, required: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("automorphism is not ergodic (cyclotomic factors {0:?})")]
    NotErgodic(Vec<u64>),

    #[error("covariance grid is not positive semidefinite: clipped mass {clipped} exceeds 10% of trace {trace}")]
    NotPsd { clipped: f64, trace: f64 },

    #[error("regularity of a custom observable is unknown")]
    RegularityUnknown,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
