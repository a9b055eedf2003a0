use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported B-spline order {0}, expected 2, 3 or 4")]
    InvalidOrder(u32),

    #[error("frame budget exceeded: {per_dim}^{dim} = {frames} frames > budget {budget}")]
    FrameBudget {
        per_dim: usize,
        dim: usize,
        frames: u128,
        budget: usize,
    },

    #[error("frame index {index} out of range for a grid of {total} frames")]
    FrameIndexOutOfRange { index: usize, total: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("not fitted: {0}")]
    NotFitted(&'static str),

    #[error("validation labels contain a single class; threshold is undefined")]
    SingleClass,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("bad magic bytes: not a {expected} file")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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
