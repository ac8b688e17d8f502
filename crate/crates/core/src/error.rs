use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("unknown level {level} (slide has {levels} levels)")]
    UnknownLevel { level: u32, levels: usize },

    #[error("unknown slide `{0}`")]
    UnknownSlide(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no eligible samples for class `{0}`")]
    NoSamples(String),

    #[error("class {class} has {count} sample(s); at least 2 are needed to interpolate")]
    TooFewSamples { class: String, count: usize },

    #[error("scorer member {member} failed after {batches_done}/{batches_total} batches: {source}")]
    Scoring {
        member: usize,
        batches_done: usize,
        batches_total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ensemble member {member} could not be opened: {source}")]
    MemberOpen {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("timed out: {0}")]
    Timeout(String),

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
