//! Three-stage cascaded face detector.
//!
//! The cascade logic (pyramid, sliding windows, box regression, NMS) is
//! independent of the networks that score patches; any [`StageScorer`] can
//! be plugged into each stage. [`blob`] has deterministic heuristic scorers
//! and [`conv`] has small trainable convolutional ones.

pub mod blob;
pub mod cascade;
pub mod conv;
pub mod geometry;
pub mod output;
pub mod pyramid;
pub mod scorer;

pub use blob::BlobScorer;
pub use cascade::{
    box_patch, detect_faces, detect_faces_traced, dynamic_resize, CascadeConfig, CascadeTrace, Detection,
};
pub use conv::{AnnotatedFrame, ConvCascade, ConvScorer, DetectorTrainOptions};
pub use geometry::{apply_box_regression, iou, nms, nms_indices, square_pad, OverlapMode};
pub use output::{FrameDetection, VideoDetections};
pub use pyramid::{build_pyramid, PyramidSpec};
pub use scorer::{CascadeScorers, Stage, StageOutput, StageScorer};

use crate::types::GeometryError;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("frame {height}x{width} is too small for the proposal window")]
    EmptyPyramid { height: usize, width: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scorer contract violated: {0}")]
    Scorer(String),
    #[error("detector checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
