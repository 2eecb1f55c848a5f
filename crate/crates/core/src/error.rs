use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} at channel {channel}, day {day}, slot {slot}")]
    NonFiniteValue {
        channel: usize,
        day: usize,
        slot: usize,
        value: f64,
    },

    #[error("normalization: {0}")]
    Normalization(String),

    #[error("position out of range: {0}")]
    OutOfRange(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {}",
        fmt_norms(.param_norms)
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norms: Vec<(&'static str, f64)>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

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

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn fmt_norms(norms: &[(&'static str, f64)]) -> String {
    norms
        .iter()
        .map(|(name, n)| format!("{name}={n:e}"))
        .collect::<Vec<_>>()
        .join(", ")
}
