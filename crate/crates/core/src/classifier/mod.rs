//! Compound-scaled MBConv classifier producing a per-crop fake probability.

pub mod backbone;
pub mod blocks;
pub mod checkpoint;
pub mod model;
pub mod scaling;

pub use backbone::{build_named, build_variant, BackboneConfig, StageConfig, VariantSpec, DEFAULT_VARIANT, VARIANTS};
pub use blocks::{MbConv, MbConvSpec, SqueezeExcite};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointConfig};
pub use model::{block_plan, prepare_batch, EfficientNet};
pub use scaling::{compound_multipliers, round_depth, round_width, Multipliers, ScalingConfig};

use crate::archive::ArchiveError;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("unknown variant {0:?} (expected B0..B7)")]
    UnknownVariant(String),
    #[error("invalid backbone config: {0}")]
    Config(String),
    #[error("input shape mismatch: model expects {expected}, got {actual}")]
    InputShape { expected: String, actual: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Checkpoint(#[from] ArchiveError),
}
