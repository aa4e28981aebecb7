use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record {id}: field `{field}`: {reason}")]
    Record {
        id: String,
        field: String,
        reason: String,
    },

    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenId { id: usize, size: usize },

    #[error("enumeration of {count} configurations exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("no valid candidates: {0}")]
    NoCandidates(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        /// Most recent checkpoint taken before the divergence.
        last_good: Box<Option<crate::trainer::Checkpoint>>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("synthetic generator: {0}")]
    Synth(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("generation service returned status {status}: {body}")]
    ServiceStatus { status: u16, body: String },

    #[error("generation service timed out")]
    ServiceTimeout,

    #[error("generation service transport: {0}")]
    ServiceTransport(String),

    #[error("generation service response malformed: {0}")]
    ServiceBody(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(id: &str, field: &str, reason: impl Into<String>) -> Self {
        Error::Record {
            id: id.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
