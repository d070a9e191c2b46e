use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while reading a WAV file. Each cause is a separate variant so
/// callers can tell a missing file from a corrupt or unsupported one.
#[derive(Debug, Error)]
pub enum WavError {
    #[error("audio file not found: {0}")]
    Missing(PathBuf),
    #[error("malformed WAV header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported WAV encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("graph validation failed at layer {layer}: {reason}")]
    Graph { layer: usize, reason: String },
    #[error("malformed {format} file: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Graph { .. } => ErrorKind::Config,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
