//! Classifier training: balanced batches, SGD with momentum under a
//! polynomial schedule, label smoothing, and video-level holdout monitoring.

pub mod config;
pub mod data;
pub mod log;
pub mod sampler;
pub mod schedule;
pub mod split;
pub mod trainer;

pub use config::{default_batch_size, TrainingConfig};
pub use data::CropDataset;
pub use log::{LogRecord, TrainLog};
pub use sampler::{balanced_batches, BalancedBatches};
pub use schedule::{poly_lr, smooth_labels};
pub use split::split_by_folder;
pub use trainer::{train, validate, TrainOutcome, TrainPaths, ValidationReport};

use crate::classifier::ClassifierError;
use crate::image::ImageError;
use crate::types::Label;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no {} examples to sample from", .0.as_str())]
    EmptyClass(Label),
    #[error("need at least {needed} {} examples for one balanced batch, found {found}", .label.as_str())]
    InsufficientData { label: Label, needed: usize, found: usize },
    #[error("non-finite loss at step {step} (lr {lr}); batch: {batch_ids:?}")]
    NonFinite {
        step: usize,
        lr: f64,
        batch_ids: Vec<String>,
    },
    #[error("holdout folders overlap the training folders: {0:?}")]
    Overlap(Vec<u32>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Aggregate(#[from] crate::aggregation::AggregateError),
}
