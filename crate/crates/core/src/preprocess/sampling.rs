use serde::{Deserialize, Serialize};

use super::PreprocessError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SamplingStrategy {
    #[default]
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingPlan {
    pub frames_per_video: usize,
    pub strategy: SamplingStrategy,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            frames_per_video: 32,
            strategy: SamplingStrategy::Uniform,
        }
    }
}

impl SamplingPlan {
    pub fn new(frames_per_video: usize) -> Self {
        Self {
            frames_per_video,
            ..Self::default()
        }
    }
}

/// Evenly spaced frame indices `round(i (frame_count - 1) / (n - 1))`, with
/// `n = min(frames_per_video, frame_count)`; strictly increasing.
pub fn sample_frames(frame_count: usize, plan: &SamplingPlan) -> Result<Vec<usize>, PreprocessError> {
    if frame_count < 1 {
        return Err(PreprocessError::EmptyVideo);
    }
    if plan.frames_per_video < 1 {
        return Err(PreprocessError::Config("frames_per_video must be at least 1".into()));
    }
    let n = plan.frames_per_video.min(frame_count);
    if n == 1 {
        return Ok(vec![0]);
    }
    let last = (frame_count - 1) as f64;
    let mut idx: Vec<usize> = (0..n)
        .map(|i| (i as f64 * last / (n - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    Ok(idx)
}
