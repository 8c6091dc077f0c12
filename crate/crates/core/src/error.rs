use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unsupported format version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("corrupt file {source_name}: {message}")]
    Corrupt { source_name: String, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trial line {line}: unknown utterance id `{id}`")]
    Resolution { line: usize, id: String },

    #[error("degenerate matrix `{name}`: {message}")]
    Degenerate { name: String, message: String },

    #[error("eigensolver did not converge on `{name}` after {sweeps} sweeps")]
    NoConvergence { name: String, sweeps: usize },

    #[error("invalid model: {0}")]
    ModelInvalid(String),
}

impl Error {
    pub(crate) fn degenerate(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Degenerate {
            name: name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numerical routines rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate { .. } | Error::NoConvergence { .. } | Error::ModelInvalid(_)
        )
    }
}
