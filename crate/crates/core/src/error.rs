use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label: {0:?}")]
    InvalidLabel(String),

    #[error("alignment does not cover node {0:?}")]
    IncompleteAlignment(String),

    #[error("missing {kind} fixture for {key:?}")]
    MissingFixture { kind: &'static str, key: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("page not found: {0:?}")]
    NotFound(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cosine similarity undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("extraction failed for option {index} ({option:?}): {source}")]
    OptionExtraction {
        index: usize,
        option: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}:{line}: {message}", path.display())]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("reserved placeholder label appeared in backend output")]
    ReservedPlaceholder,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the network or a remote service rather than by the input.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::Protocol(_))
    }
}
