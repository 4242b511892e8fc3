use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("integration grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("integration grid step {step} exceeds bandwidth {bandwidth}")]
    GridTooCoarse { step: f64, bandwidth: f64 },

    #[error("invalid integration grid: {0}")]
    InvalidGrid(String),

    #[error("sample is degenerate (zero spread), bandwidth undefined")]
    DegenerateSample,

    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),

    #[error("datasets have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid distance configuration: {0}")]
    InvalidDistance(String),

    #[error("expected {expected} parameters, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quantile level {0} is outside (0, 1)")]
    QOutOfRange(f64),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no particle satisfied the tolerance {epsilon}")]
    NoAcceptances { epsilon: f64 },

    #[error("sampler is degenerate: {0}")]
    Degenerate(String),

    #[error("particle cloud is empty")]
    EmptyCloud,

    #[error("optimizer failed: {0}")]
    OptimizerFailure(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than by a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EmptyDataset
                | Error::NonFinite { .. }
                | Error::GridTooNarrow(_)
                | Error::GridTooCoarse { .. }
                | Error::InvalidGrid(_)
                | Error::DegenerateSample
                | Error::InvalidBandwidth(_)
                | Error::LengthMismatch { .. }
                | Error::InvalidDistance(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::QOutOfRange(_)
                | Error::InvalidPrior(_)
                | Error::InvalidConfig(_)
                | Error::Parse { .. }
                | Error::Json(_)
        )
    }
}
