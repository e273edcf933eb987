use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace is not time-ordered at record {index}: {time} < {previous}")]
    UnsortedTrace {
        index: usize,
        time: f64,
        previous: f64,
    },

    #[error("object {object} has size {size} which does not fit below capacity {capacity}")]
    ObjectTooLarge {
        object: u64,
        size: u64,
        capacity: u64,
    },

    #[error("capacity violation: need {needed} bytes but only {available} are evictable")]
    CapacityViolation { needed: u64, available: u64 },

    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("unknown object {0}")]
    UnknownObject(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
