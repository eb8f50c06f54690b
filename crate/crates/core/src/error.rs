use thiserror::Error;

/// Errors raised by the forward and inverse solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid geometry, measurement setup or run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller passed an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Factorization breakdown or another numerical failure.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A normalization or step denominator vanished.
    #[error("degenerate state: {0}")]
    Degenerate(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }

    /// Prefixes the message with extra context while keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Argument(m) => Error::Argument(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Degenerate(m) => Error::Degenerate(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
