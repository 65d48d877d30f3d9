use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the toolkit.
///
/// Variants fall into three families that map onto process exit codes:
/// bad arguments (1), bad data (2), and numeric failures (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{measure}: min-max normalization undefined (min and max disagreement both {value})")]
    UndefinedNormalization { measure: &'static str, value: f64 },

    #[error("{measure}: zero self-covariance, all points coincide in one embedding")]
    ZeroSelfCovariance { measure: &'static str },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }

    /// Process exit code for this error: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidData(_)
            | Error::ShapeMismatch(_)
            | Error::Json(_) => 2,
            Error::UndefinedNormalization { .. }
            | Error::ZeroSelfCovariance { .. }
            | Error::Numeric(_) => 3,
        }
    }
}
