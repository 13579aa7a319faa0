use std::path::PathBuf;

use serde::Serialize;

/// Filtration statistics carried by a starved batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StarvationStats {
    pub target_groups: usize,
    pub kept_groups: usize,
    pub attempts: usize,
    pub filtered_all_correct: usize,
    pub filtered_all_incorrect: usize,
    pub filtered_zero_variance: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(
        "batch starvation: kept {} of {} groups after {} attempts \
         ({} all-correct, {} all-incorrect, {} zero-variance filtered)",
        .0.kept_groups, .0.target_groups, .0.attempts,
        .0.filtered_all_correct, .0.filtered_all_incorrect, .0.filtered_zero_variance
    )]
    BatchStarvation(StarvationStats),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::NonFinite(_) => "non_finite",
            Error::BatchStarvation(_) => "batch_starvation",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
