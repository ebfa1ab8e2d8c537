use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("reservoir capacity must be at least 1")]
    ZeroCapacity,

    #[error("entry time index {got} is out of order, expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("weight must be finite and positive, got {0}")]
    InvalidWeight(f64),

    #[error("reservoir is not full yet ({count} of {capacity} items)")]
    NotFull { count: u64, capacity: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid environment position: {0}")]
    InvalidPosition(String),

    #[error("action {action} out of range for {actions} actions")]
    InvalidAction { action: usize, actions: usize },

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("query over an empty memory")]
    EmptyMemory,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
