use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },

    #[error("conflicting entries for triple {triple:?}: {first} vs {second}")]
    ConflictingEntry {
        triple: [usize; 3],
        first: f64,
        second: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not orthogonal (||U^T U - I||_2 = {deviation:e})")]
    NotOrthogonal { deviation: f64 },

    #[error("covariance is singular (smallest eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    SingularCovariance { min_eigenvalue: f64, trace: f64 },

    #[error("moment of {index:?} depends on pivot: {first} (pivot {first_pivot}) vs {second} (pivot {second_pivot})")]
    PivotInconsistency {
        index: Vec<usize>,
        first_pivot: usize,
        first: f64,
        second_pivot: usize,
        second: f64,
    },

    #[error("degree {requested} exceeds the configured cap {cap}")]
    DegreeCap { requested: usize, cap: usize },

    #[error("Gram block of degree {degree} is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { degree: usize, condition: f64 },

    #[error(
        "Gram block of degree {degree} is not positive semidefinite (eigenvalue {eigenvalue:e})"
    )]
    IndefiniteGram { degree: usize, eigenvalue: f64 },

    #[error("operators X_1..X_d, I are linearly dependent on the truncated space")]
    RankDeficientFit,

    #[error("truncation too shallow: {0}")]
    Truncation(String),

    #[error("dimension must be 3, got {0}")]
    DimensionNot3(usize),

    #[error("point {point:?} lies outside the Laplace domain")]
    OutOfDomain { point: [f64; 3] },

    #[error("integral diverges at t = {t:?}: {reason}")]
    DomainError { t: [f64; 3], reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable variant name for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::ConflictingEntry { .. } => "ConflictingEntry",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotOrthogonal { .. } => "NotOrthogonal",
            Error::SingularCovariance { .. } => "SingularCovariance",
            Error::PivotInconsistency { .. } => "PivotInconsistency",
            Error::DegreeCap { .. } => "DegreeCap",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::IndefiniteGram { .. } => "IndefiniteGram",
            Error::RankDeficientFit => "RankDeficientFit",
            Error::Truncation(_) => "Truncation",
            Error::DimensionNot3(_) => "DimensionNot3",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::DomainError { .. } => "DomainError",
            Error::InvalidParam(_) => "InvalidParam",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}
