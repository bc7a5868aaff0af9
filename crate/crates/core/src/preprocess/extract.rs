use super::crop::crop_with_margin;
use super::sampling::{sample_frames, SamplingPlan};
use super::source::FrameDirVideo;
use super::PreprocessError;
use crate::detector::{detect_faces, CascadeConfig, CascadeScorers, VideoDetections};
use crate::types::{FaceCrop, Label};

/// Run the cascade on the sampled frames of one video.
pub fn detect_video(
    video: &FrameDirVideo,
    scorers: CascadeScorers<'_>,
    cascade: &CascadeConfig,
    plan: &SamplingPlan,
) -> Result<VideoDetections, PreprocessError> {
    let mut out = VideoDetections::new(&video.video_id);
    for index in sample_frames(video.frame_count(), plan)? {
        let frame = video.load_frame(index)?;
        let dets = detect_faces(&frame, scorers, cascade)?;
        out.insert(index, &dets);
    }
    Ok(out)
}

/// Margin crops for every stored detection, ordered by frame then face index.
pub fn crops_from_detections(
    video: &FrameDirVideo,
    detections: &VideoDetections,
    margin: f64,
    label: Label,
) -> Result<Vec<(usize, FaceCrop)>, PreprocessError> {
    let mut crops = Vec::new();
    for (&index, faces) in &detections.frames {
        if faces.is_empty() {
            continue;
        }
        let frame = video.load_frame(index)?;
        for (k, face) in faces.iter().enumerate() {
            let b = face.to_box()?;
            crops.push((k, crop_with_margin(&frame, &b, margin, &video.video_id, index, label)?));
        }
    }
    Ok(crops)
}
