use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates the documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A root finder could not find a sign change in its bracket.
    #[error("root not bracketed: {0}")]
    NotBracketed(String),
    /// A computation produced a non-finite or degenerate result.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A requested object is larger than the configured budget.
    #[error("size budget exceeded: {0}")]
    Budget(String),
    /// Reading a configuration file or writing results failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Budget(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
