use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at {location}: {message}")]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{path}: image error: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("asset not found: {0}")]
    MissingAsset(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    /// Short category name, used by the command-line front-end to pick an
    /// exit code and prefix messages.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::MissingAsset(_) => "io",
            Error::Format { .. } | Error::Image { .. } => "format",
            Error::Invalid { .. } | Error::DimensionMismatch(_) => "validation",
            Error::Config(_) => "config",
        }
    }
}
