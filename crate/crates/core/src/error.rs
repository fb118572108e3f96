use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("parameter vector has two or more coordinates at 0 or 1")]
    InvalidRegion,

    #[error("expected an interior parameter vector (all coordinates in (0, 1))")]
    NotInterior,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("verdict entries must be +1 or -1, got {value} at index {index}")]
    BadVerdict { index: usize, value: i64 },

    #[error("exact enumeration supports n <= {cap}, got n = {n}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("step size {eta} at t = {t} exceeds 1")]
    StepTooLarge { t: u64, eta: f64 },

    #[error("invalid step-size schedule: {0}")]
    Schedule(String),

    #[error("invalid truncation family: {0}")]
    Truncation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration aborted at s = {time}: V increased by {increase:e} (allowed {allowed:e})")]
    LyapunovIncrease {
        time: f64,
        increase: f64,
        allowed: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
