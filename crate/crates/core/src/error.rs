use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition (shape, range, mode).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A structural assumption required by an algorithm is not met by the data.
    #[error("precondition not met: {0}")]
    Precondition(String),

    /// A numerical step failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A file or stream did not follow the expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
