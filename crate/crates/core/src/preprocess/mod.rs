//! Frame sampling, margin-expanded face crops, SSIM difference masks and
//! on-disk dataset materialization.

pub mod crop;
pub mod extract;
pub mod materialize;
pub mod sampling;
pub mod source;
pub mod ssim;

pub use crop::{crop_with_margin, margin_rect};
pub use extract::{crops_from_detections, detect_video};
pub use materialize::{materialize_dataset, MaterializeOptions, MaterializeReport, VideoInput};
pub use sampling::{sample_frames, SamplingPlan, SamplingStrategy};
pub use source::{
    frame_file_name, list_videos, ExternalDecoder, FrameDirVideo, VideoMeta, VideoMetadata, VideoRecord, METADATA_FILE,
    META_FILE,
};
pub use ssim::{mean_ssim, ssim_map, ssim_values, SsimParams};

use crate::detector::DetectError;
use crate::image::ImageError;
use crate::manifest::ManifestError;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("frame_count must be at least 1")]
    EmptyVideo,
    #[error("invalid preprocess config: {0}")]
    Config(String),
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("box {0:?} lies entirely outside the frame")]
    BoxOutsideFrame([f64; 4]),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("video decoder failed: {0}")]
    Decoder(String),
    #[error("no video was processed successfully ({} failures)", .0.len())]
    NothingSucceeded(Vec<(String, String)>),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PreprocessError + '_ {
    move |source| PreprocessError::Io {
        path: path.display().to_string(),
        source,
    }
}
