use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid hyperparameters, network shapes or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A contract between caller and callee was broken (wrong lengths, stale caches, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A NaN or infinity appeared where finite values are required.
    #[error("numeric fault in {context} (index {index})")]
    Numeric { context: String, index: usize },

    /// An environment failed: child process died, malformed protocol line, timeout.
    #[error("environment fault: {0}")]
    Env(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn numeric(context: impl Into<String>, index: usize) -> Self {
        Error::Numeric {
            context: context.into(),
            index,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
