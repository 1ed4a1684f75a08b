//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no true-match pair in score list; recall is undefined")]
    NoTrueMatch,

    #[error("target precision {target} unachievable; best achievable is {best}")]
    UnachievableTarget { target: f64, best: f64 },

    #[error("non-finite loss at epoch {epoch}, iteration {iteration}; restart with a different seed")]
    NonFiniteLoss { epoch: usize, iteration: usize },

    #[error("backward called with a cache from a stale forward (model step {model_step}, cache step {cache_step})")]
    StaleCache { model_step: u64, cache_step: u64 },

    #[error("k = {k} out of range for {n} source embeddings")]
    KOutOfRange { k: usize, n: usize },

    #[error("no single-face item; base embedding is undefined")]
    NoSingleFaceItem,

    #[error("oracle has no embedding for item {0:?}")]
    MissingEmbedding(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
