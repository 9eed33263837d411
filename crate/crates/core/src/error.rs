use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// A grid or run configuration that cannot be used.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative method failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An invariant that the algorithms guarantee did not hold.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("matrix file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// The message without the kind prefix.
    pub fn detail(&self) -> String {
        match self {
            Error::Input(m) | Error::Config(m) | Error::Numeric(m) | Error::Internal(m) | Error::Format(m) => m.clone(),
            Error::Io(e) => e.to_string(),
        }
    }
}
