use thiserror::Error;

/// Errors surfaced by parameter derivation, protocol execution, and codecs.
#[derive(Debug, Error)]
pub enum Error {
    /// A user-facing parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input (message bag, special-bin set, dataset) is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration is self-consistent but unsupported by the requested
    /// protocol variant.
    #[error("configuration error: {0}")]
    Config(String),

    /// A request exceeds the size cap of an exact algorithm.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// Binary encode/decode failure.
    #[error("codec error: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
