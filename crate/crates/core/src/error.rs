use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid document `{doc}`: {reason}")]
    InvalidDocument { doc: String, reason: String },

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("document has {edges} edges; exhaustive search is capped at {cap}")]
    TooManyEdges { edges: usize, cap: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
