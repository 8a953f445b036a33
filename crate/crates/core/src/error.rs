use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {0} is already in the active set")]
    DuplicateIndex(usize),

    #[error("index {0} is not in the active set")]
    MissingIndex(usize),

    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("root finding did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    RootNotConverged { iterations: usize, lo: f64, hi: f64 },

    #[error("convex sum is unbounded below or its minimum is not attained (last iterate {last})")]
    Divergence { last: f64 },

    #[error("term {index}: {source}")]
    Term {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("geometry failure between terms {first} and {second}: {reason}")]
    Geometry {
        first: usize,
        second: usize,
        reason: String,
    },

    #[error("unsupported term {index}: {reason}")]
    Unsupported { index: usize, reason: String },

    #[error("objective is unbounded below")]
    Unbounded,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_term(self, index: usize) -> Self {
        Error::Term {
            index,
            source: Box::new(self),
        }
    }
}
