use thiserror::Error;

/// Failure classes shared by every layer of the crate.
///
/// The two variants map one-to-one onto the CLI exit codes 2 and 3.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Bad input: dimension mismatch, parameter out of range, unknown name.
    #[error("usage error: {0}")]
    Usage(String),
    /// A computation produced a non-finite or non-integrable value.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
