use thiserror::Error;

use crate::index_lang::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tensor order {order} exceeds the supported maximum of {max}")]
    Capacity { order: usize, max: usize },

    #[error("index error: {0}")]
    Index(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate transition: {0}")]
    DegenerateTransition(String),

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("unsupported dimension {found}, expected {expected}")]
    UnsupportedDimension { found: usize, expected: usize },

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unbound symbol `{0}`")]
    Binding(String),

    #[error("expression is not valid index notation: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn index(msg: impl Into<String>) -> Self {
        Error::Index(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
