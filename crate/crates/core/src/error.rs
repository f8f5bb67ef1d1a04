use std::path::PathBuf;

use thiserror::Error;

use crate::training::TrainReport;

pub type Result<T> = std::result::Result<T, AtmError>;

#[derive(Debug, Error)]
pub enum AtmError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index {index} out of bounds for length {len}")]
    Index { index: usize, len: usize },

    #[error("degenerate documents (every present word has idf 0): {docs:?}")]
    DegenerateDocument { docs: Vec<usize> },

    #[error("rank {rank} is below the requested {needed} dimensions")]
    Rank { rank: usize, needed: usize },

    #[error("training diverged at generator iteration {step}")]
    Diverged { step: usize, report: TrainReport },

    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl AtmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AtmError::Io {
            path: path.into(),
            source,
        }
    }
}
