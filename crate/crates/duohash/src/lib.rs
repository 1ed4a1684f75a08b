//! Dual-purpose perceptual-hashing testbed.
//!
//! A small embedding model is trained with a contrastive loss over a
//! cross-batch memory to do two things at once on seeded synthetic corpora:
//! detect edited copies of known items (the advertised purpose) and match
//! new images of designated target individuals (the hidden one). The crate
//! covers the full pipeline around that model: hash types and LSH
//! binarization, retrieval and recognition metrics with threshold
//! calibration, the training loop, a client-side-scanning simulation with
//! k-means template reduction and collision forging, and the dataset
//! cleaning algorithms.
//!
//! Everything is deterministic given its seeds: worlds regenerate from
//! config, training replays bit-identically, and reports are byte-stable.

pub mod cleaning;
pub mod css;
pub mod error;
pub mod hash;
pub mod metrics;
pub mod model;
pub mod report;
pub mod synth;
pub mod trainer;
pub mod xbm;

pub use error::{Error, Result};
pub use hash::{BinaryHash, Embedding, LshProjector};
pub use metrics::{FrReport, PairScore};
pub use model::{Checkpoint, Mode, ModelConfig, ModelParams};
pub use synth::{World, WorldConfig};
pub use trainer::{TrainMode, TrainingConfig};
pub use xbm::{CrossBatchMemory, Label};
