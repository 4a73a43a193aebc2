use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("subject {subject_id}: {reason}")]
    Subject { subject_id: String, reason: String },

    #[error("feature `{feature}`: unknown category `{value}`")]
    UnknownCategory { feature: String, value: String },

    #[error("feature `{0}` is not part of the schema")]
    UnknownFeature(String),

    #[error("invalid horizon {0}: must be at least one year")]
    InvalidHorizon(i64),

    #[error("empty visit history")]
    EmptyHistory,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("position index {0} exceeds the position table")]
    PositionOutOfRange(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("forward trace is stale: parameters changed since the forward pass")]
    StaleTrace,

    #[error("schema hash mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("no eligible samples for group {group}, follow-up year {year}")]
    EmptyPseudoSet { group: String, year: u32 },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
