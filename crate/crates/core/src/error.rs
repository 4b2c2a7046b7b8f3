use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed or violates a constraint.
    #[error("{0}")]
    Config(String),

    /// A clip could not be loaded or is inconsistent.
    #[error("clip `{clip_id}`: {message}")]
    Clip { clip_id: String, message: String },

    /// An operation was called outside its domain (shapes, bounds, sizes).
    #[error("{0}")]
    InvalidInput(String),

    /// A numerical routine failed (non-finite values, SVD failure, degenerate graph).
    #[error("{0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error class reported by the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Clip { .. } | Error::InvalidInput(_) | Error::Io { .. } => ErrorClass::Data,
            Error::Numeric(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn clip(clip_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Clip {
            clip_id: clip_id.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message with context, keeping the class.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Clip { clip_id, message } => Error::Clip {
                clip_id,
                message: format!("{ctx}: {message}"),
            },
            Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            io @ Error::Io { .. } => io,
        }
    }
}
