//! Minimal differentiable multilayer-perceptron substrate.
//!
//! Everything the learners need and nothing more: dense matrices, a fixed
//! MLP forward/backward pair, softmax and KL-divergence primitives, Adam,
//! and target-network synchronization. All math is `f64` and every
//! operation is deterministic given the seeded RNG, so full training runs
//! reproduce bitwise.

mod checkpoint;
mod losses;
mod matrix;
mod mlp;
mod optim;
mod rng;

pub use checkpoint::{load_json, save_json, CheckpointEnvelope};
pub use losses::{
    floor_distribution, kl_divergence, mse_weighted, redistribute_to_unflagged, softmax, KL_FLOOR,
};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardTrace, Layer, Mlp, MlpGrads};
pub use optim::{hard_sync, polyak_sync, Adam, SyncMode};
pub use rng::{RngState, SeededRng};

/// Errors surfaced at the numeric API boundary.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("distribution does not sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("distribution entry {index} = {value} is below the KL floor; floor it first")]
    BelowFloor { index: usize, value: f64 },
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("checkpoint format tag mismatch: expected {expected:?}, found {found:?}")]
    FormatTag { expected: String, found: String },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
