use thiserror::Error;

/// Errors raised by problem construction, solving and verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range: {context}")]
    Index { context: &'static str, index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("certificate flavor mismatch: {0}")]
    Flavor(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
