use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numerical kernels, estimators and image I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid degrees of freedom nu = {0}")]
    InvalidNu(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vector is not on the unit sphere (norm {0})")]
    NotUnitVector(f64),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid sample set: {0}")]
    InvalidSamples(String),

    #[error("sample {0} is the zero vector")]
    ZeroSample(usize),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("degenerate initialization: {0}")]
    DegenerateInit(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient candidates: requested {requested}, window holds {available}")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),

    #[error("image too small for this metric: {0}x{1}")]
    TooSmall(usize, usize),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("raster kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: u32, found: u32 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("angle {value} at row {row}, column {col} outside [-pi, pi)")]
    AngleOutOfRange { row: usize, col: usize, value: f64 },

    #[error("i/o failure on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
