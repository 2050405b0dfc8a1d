use thiserror::Error;

/// Error type shared by the whole crate.
///
/// The variants map one-to-one onto the CLI exit-code contract: parse
/// errors, domain errors (bad argument combinations, violated
/// preconditions), resource limits, and I/O failures.
#[derive(Error, Debug)]
pub enum Error {
    /// A sequence (or requested length) is empty or otherwise unusable.
    #[error("invalid length: {0}")]
    InvalidLength(String),
    /// Input text contained a symbol outside the admitted alphabet.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// A precondition on the operation's arguments is violated.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request is valid but exceeds a supported size limit.
    #[error("resource limit: {0}")]
    Resource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
