use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the SSRM pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("record {id}: label {label:?} is not one of \"A\" or \"B\"")]
    InvalidLabel { id: String, label: String },

    #[error("record {id}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("labeled fraction {0} is outside (0, 1]")]
    InvalidFraction(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("featurizer mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite loss at step {step} (epoch {epoch})")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
