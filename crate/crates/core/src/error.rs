use std::path::PathBuf;

use crate::gen::GenerationRun;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid IPv6 address {input:?}: bad token {token:?}")]
    Parse { input: String, token: String },

    #[error("invalid word sequence: {0}")]
    Sequence(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("index {index} out of range for size {size}")]
    Index { index: usize, size: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid graph state: {0}")]
    State(String),

    #[error("words not in vocabulary: {}", .0.join(", "))]
    Vocab(Vec<String>),

    #[error("zero-norm vector in cosine loss")]
    Norm,

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("attempt budget exhausted after {} attempts with {} of {} candidates", .0.attempts, .0.candidates.len(), .0.requested)]
    PartialResult(Box<GenerationRun>),

    #[error("{}:{line}: {message}", path.display())]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent input data rather
    /// than by bad arguments.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Param(_))
    }
}
