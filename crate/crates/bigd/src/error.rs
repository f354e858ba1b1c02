//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Unsupported or undecodable image/file format.
    #[error("format error: {0}")]
    Format(String),
    /// Malformed text artifact, with the offending line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    /// A downstream stage was run before the stage that produces its input.
    #[error("missing {stage} artifact {path}; run the {stage} stage first")]
    MissingArtifact { stage: &'static str, path: PathBuf },
    /// Numerical guarantee violated (non-finite values, broken monotonicity).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message of message-bearing variants, keeping the kind.
    pub fn annotate(self, context: &str) -> Self {
        match self {
            Error::Format(m) => Error::Format(format!("{context}: {m}")),
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{context}: {m}")),
            Error::Dataset(m) => Error::Dataset(format!("{context}: {m}")),
            Error::Protocol(m) => Error::Protocol(format!("{context}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{context}: {m}")),
            other => other,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
