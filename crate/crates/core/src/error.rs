use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("query sets overlap on `{0}`")]
    Overlap(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("precondition failed for {operation}: {reason}")]
    Precondition {
        operation: &'static str,
        reason: String,
    },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}

impl Error {
    pub(crate) fn precondition(operation: &'static str, reason: impl Into<String>) -> Self {
        Error::Precondition {
            operation,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
