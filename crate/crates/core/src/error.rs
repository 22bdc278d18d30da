use std::path::PathBuf;

use hetsl_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("time {t}s is outside the channel trace [0, {end}s)")]
    TimeOutOfRange { t: f64, end: f64 },

    #[error("link rate must be positive, got {0} bit/s")]
    NonPositiveRate(f64),

    #[error("blockage intervals overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingIntervals(f64, f64, f64, f64),

    #[error("interpolation target {target} is not bracketed by uploaded indices {available:?}")]
    Unbracketed { target: f64, available: Vec<f64> },

    #[error("sequence length mismatch: camera A has {a} frames, camera B has {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("T_tot series exhausted before exchange {n} (series covers {covered} exchanges)")]
    SeriesExhausted { n: u64, covered: u64 },

    #[error("trace too short: need {needed} samples, have {available}")]
    InsufficientTrace { needed: usize, available: usize },

    #[error("split ratio {ratio} leaves an empty side for {total} samples")]
    EmptySplit { ratio: f64, total: usize },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch { path: PathBuf, expected: u32, found: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input to {0}")]
    Empty(&'static str),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
