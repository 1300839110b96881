use std::path::PathBuf;

use crate::scenario::BeaconId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance of position {index} is not positive definite")]
    NotPositiveDefinite { index: usize },

    #[error("edge ({position}, {beacon}) is degenerate: position and beacon coincide")]
    DegenerateEdge { position: usize, beacon: BeaconId },

    #[error("no edge between position {position} and beacon {beacon}")]
    MissingEdge { position: usize, beacon: BeaconId },

    #[error("unknown beacon id {0}")]
    UnknownBeacon(BeaconId),

    #[error("beacon {0} is already selected")]
    AlreadySelected(BeaconId),

    #[error("budget {budget} outside [1, {candidates}]")]
    InvalidBudget { budget: usize, candidates: usize },

    #[error("brute force would enumerate {count} subsets (cap {cap})")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("selection results come from different instances")]
    MismatchedInstances,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("CMA-ES covariance lost positive definiteness after {0} restarts")]
    CovarianceBreakdown(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
