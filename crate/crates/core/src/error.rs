//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An index or size argument is out of its admissible range.
    #[error("range error: {0}")]
    Range(String),
    /// Arguments are individually valid but do not fit together.
    #[error("usage error: {0}")]
    Usage(String),
    /// A structural invariant that construction should have enforced failed.
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// Training produced non-finite parameters.
    #[error("training diverged for loss {loss}: {detail}")]
    Training { loss: String, detail: String },
    /// An experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
