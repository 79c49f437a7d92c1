use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point set")]
    EmptyPointSet,

    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("underdetermined: {0} correspondences, at least 3 required")]
    Underdetermined(usize),

    #[error("degenerate configuration")]
    DegenerateConfiguration,

    #[error("correspondence index out of bounds: ({source_index}, {target_index})")]
    IndexOutOfBounds {
        source_index: usize,
        target_index: usize,
    },

    #[error("descriptor dimension mismatch: {0} vs {1}")]
    DescriptorDimensionMismatch(usize, usize),

    #[error("descriptor count {descriptors} does not match point count {points}")]
    DescriptorCountMismatch { descriptors: usize, points: usize },

    #[error("inconsistent descriptor dimension at row {row}: expected {expected}, found {found}")]
    InconsistentDescriptorDimension {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("missing descriptors on {0} cloud")]
    MissingDescriptors(&'static str),

    #[error("empty vector")]
    EmptyVector,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("empty ground truth")]
    EmptyGroundTruth,

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("plan entry ({0}, {1}) is not strictly positive")]
    NonPositivePlan(usize, usize),

    #[error("insufficient points: need {needed}, have {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("degenerate viewpoint: only {0} points survived rendering")]
    DegenerateViewpoint(usize),

    #[error("length mismatch: {0} predictions vs {1} ground truths")]
    LengthMismatch(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

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
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
