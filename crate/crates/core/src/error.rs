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

    #[error("{path}: bad magic {found} at byte offset 0 (expected {expected})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated file, needed {needed} bytes at byte offset {offset} but file has {len}")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        len: usize,
    },

    #[error("sample count mismatch: images file has {images}, labels file has {labels} (count field at byte offset 4)")]
    CountMismatch { images: usize, labels: usize },

    #[error("csv {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: u64, batch: usize },

    #[error("sample {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("requested {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cannot shrink output layer from {current} to {requested} classes")]
    Shrink { current: usize, requested: usize },

    #[error("sample {0} appears in both a frozen cluster and the current pool")]
    Overlap(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    /// Errors caused by the user's configuration or input files rather than
    /// by the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic { .. }
                | Error::Truncated { .. }
                | Error::CountMismatch { .. }
                | Error::Csv { .. }
                | Error::InvalidConfig(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
