use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("singular scale matrix: d[{index}] = {value}")]
    SingularScale { index: usize, value: f64 },

    #[error("degenerate skewness: 1 - kappa = {0} is not positive")]
    DegenerateSkew(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("estimator {0} is not available for this family")]
    UnsupportedEstimator(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown subject index {index} (only {n_subjects} subjects)")]
    UnknownSubject { index: usize, n_subjects: usize },

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("quadrature grid too small: mass changed by {0:e} after extending the bounds")]
    BoundsTooSmall(f64),

    #[error("invalid configuration: {0}")]
    Spec(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
