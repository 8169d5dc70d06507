use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate item_id {id:?} at lines {first} and {second}")]
    DuplicateItem {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("item {item_id:?} is not in the catalog (user {user_id:?}, t={timestamp})")]
    UnknownItem {
        item_id: String,
        user_id: String,
        timestamp: i64,
    },

    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing artifact {path}: run stage `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DuplicateItem { .. } => "duplicate_item",
            Error::Dimension { .. } => "dimension",
            Error::UnknownItem { .. } => "unknown_item",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Invalid(_) => "invalid",
            Error::Empty(_) => "empty",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Config(_) => "config",
            Error::Serde(_) => "serde",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
