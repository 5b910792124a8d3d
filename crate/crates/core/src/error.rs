use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record {record}: {reason}")]
    Malformed { record: String, reason: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty vocabulary after filtering ({0}); relax the fdr or the df band")]
    EmptyVocabulary(String),

    #[error("disconnected support: term {0} has zero mixture mass")]
    DisconnectedSupport(usize),

    #[error("label {0:?} has no positive documents")]
    NoPositives(String),

    #[error("no label survived qualification")]
    NoQualifiedLabels,

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors that describe an out-of-range or inconsistent setting
    /// rather than a failure while processing data.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidParameter(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
