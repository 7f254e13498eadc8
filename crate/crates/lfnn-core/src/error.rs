use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("worker partition: {0}")]
    Partition(String),

    #[error("{path}: {what} (byte offset {offset})")]
    Parse {
        path: String,
        offset: u64,
        what: String,
    },

    #[error("non-finite loss at step {step}, layer {layer}{}", worker.map(|w| format!(", worker {w}")).unwrap_or_default())]
    NonFiniteLoss {
        step: u64,
        layer: usize,
        worker: Option<usize>,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
