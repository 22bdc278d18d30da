use std::path::PathBuf;

use hetsl_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    ConfigFile { path: PathBuf, line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: u64, loss: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit status for each error class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config = 2,
    Io = 3,
    Data = 4,
    Training = 5,
}

impl HarnessError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Config { .. } | Self::ConfigFile { .. } | Self::UnknownKey(_) => ErrorClass::Config,
            Self::Io { .. } | Self::Csv { .. } => ErrorClass::Io,
            Self::Diverged { .. } => ErrorClass::Training,
            Self::Empty(_) | Self::LengthMismatch(..) => ErrorClass::Data,
            Self::Core(e) => match e {
                CoreError::InvalidConfig { .. } => ErrorClass::Config,
                CoreError::Io { .. } => ErrorClass::Io,
                CoreError::MalformedHeader { .. }
                | CoreError::Truncated { .. }
                | CoreError::VersionMismatch { .. }
                | CoreError::LengthMismatch { .. }
                | CoreError::Empty(_)
                | CoreError::EmptySplit { .. }
                | CoreError::InsufficientTrace { .. } => ErrorClass::Data,
                _ => ErrorClass::Training,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }
}
