use thiserror::Error;

/// Errors raised by simulator components.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a precondition (bad split fractions,
    /// empty client list, lambda out of range, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Two vectors that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// A parameter vector picked up a NaN or infinity during an update.
    #[error("non-finite parameter detected during {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
