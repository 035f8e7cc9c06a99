use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("record {record}: missing or invalid field `{field}`")]
    Schema { record: String, field: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("label cache has no entry for instance {0}")]
    LabelCacheMiss(String),

    #[error("question generation failed: {0}")]
    Generation(String),

    #[error("model unavailable: {0}")]
    Unavailable(String),

    #[error("unknown session {0}")]
    SessionNotFound(String),

    #[error("session {0} is not awaiting an answer")]
    SessionConflict(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
