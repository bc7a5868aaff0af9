//! Deepfake video detection pipeline.
//!
//! Frames are sampled from each video, faces are located with a three-stage
//! cascaded detector, margin-expanded crops are scored by a compound-scaled
//! MBConv classifier, and frame probabilities are fused into a video verdict
//! by confidence-weighted aggregation. The [`training`] module trains the
//! classifier and [`metrics`] evaluates video-level predictions.

pub mod aggregation;
pub mod archive;
pub mod classifier;
pub mod detector;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod preprocess;
pub mod synth;
pub mod training;
pub mod types;

pub use crate::image::ImageBuffer;
pub use crate::types::{BoundingBox, FaceCrop, FramePrediction, Label, Landmarks, VideoPrediction};

pub use facefake_nn::par;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Geometry(#[from] types::GeometryError),
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
    #[error(transparent)]
    Detect(#[from] detector::DetectError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Classifier(#[from] classifier::ClassifierError),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Aggregate(#[from] aggregation::AggregateError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Archive(#[from] archive::ArchiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Run `f` on a pool of `workers` threads (or inline without the `parallel` feature).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}
