use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Internal state does not match what the operation requires
    /// (e.g. a backward pass fed a cache from a different forward pass).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A serialized container is malformed; the message names the
    /// offending field or tensor.
    #[error("format error: {0}")]
    Format(String),

    /// Training hit a non-finite loss; carries the abort diagnostics.
    #[error("numerical abort at epoch {epoch}, batch {batch}: {detail}")]
    Numerical {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
