use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must be at least 1")]
    InvalidBandwidth(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("spectrum violates real-signal symmetry (deviation {0:.3e})")]
    NonRealSignal(f64),

    #[error("backward called without a cached forward context")]
    MissingContext,

    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("shape conflict: {0}")]
    ShapeConflict(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    NonFiniteLoss { epoch: usize, batch: usize, norms: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<S: Into<String>>(msg: S) -> Error {
    Error::Dimension(msg.into())
}
