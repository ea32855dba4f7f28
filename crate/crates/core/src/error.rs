use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver and dataset pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate coefficient: value {value} at node {node} (must be > 0)")]
    DegenerateCoefficient { node: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("level mismatch: expected level {expected}, got level {got}")]
    LevelMismatch { expected: usize, got: usize },

    #[error("non-finite iterate on level {level}")]
    NonFinite { level: usize },

    #[error("non-finite damping bound {0}")]
    NonFiniteBound(f64),

    #[error("active-set oracle: {0}")]
    Oracle(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("shape mismatch in {file}: expected {expected} bytes, found {found}")]
    ShapeMismatch {
        file: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{skipped} of {attempted} admissible samples failed to solve, above the 1% budget")]
    SkipBudget { skipped: usize, attempted: usize },

    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u32),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
