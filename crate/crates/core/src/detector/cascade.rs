use serde::{Deserialize, Serialize};

use super::geometry::{apply_box_regression, nms, nms_indices, square_pad, OverlapMode};
use super::pyramid::{build_pyramid, PyramidSpec};
use super::scorer::{CascadeScorers, Stage, StageOutput, StageScorer};
use super::DetectError;
use crate::image::ImageBuffer;
use crate::types::{BoundingBox, Landmarks};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub stage_thresholds: [f64; 3],
    pub nms_thresholds: [f64; 3],
    pub nms_modes: [OverlapMode; 3],
    pub pyramid: PyramidSpec,
    /// Frames whose longer side exceeds this are downscaled before detection.
    pub detector_input_cap: usize,
    /// Proposal window stride in scaled-level pixels.
    pub stride: usize,
    /// IoU threshold for suppression inside a single pyramid level.
    pub per_scale_nms: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            stage_thresholds: [0.6, 0.7, 0.8],
            nms_thresholds: [0.7, 0.7, 0.7],
            nms_modes: [OverlapMode::Union, OverlapMode::Union, OverlapMode::Min],
            pyramid: PyramidSpec::default(),
            detector_input_cap: 640,
            stride: 2,
            per_scale_nms: 0.5,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        self.pyramid.validate()?;
        if self.stage_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(DetectError::Config("stage thresholds must lie in [0, 1]".into()));
        }
        let iou_ok = |t: &f64| *t > 0.0 && *t <= 1.0;
        if !self.nms_thresholds.iter().all(iou_ok) || !iou_ok(&self.per_scale_nms) {
            return Err(DetectError::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.stride == 0 || self.detector_input_cap < self.pyramid.stage1_input {
            return Err(DetectError::Config(
                "stride must be positive and the input cap at least one window".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub landmarks: Landmarks,
}

/// Candidate counts after each stage, for auditing the cascade.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CascadeTrace {
    pub stage_counts: [usize; 3],
    pub resize_scale: f64,
    pub pyramid_levels: usize,
}

/// Downscale so the longer side is at most `cap`. Returns the working frame and
/// the applied scale (1.0 when untouched).
pub fn dynamic_resize(frame: &ImageBuffer, cap: usize) -> (ImageBuffer, f64) {
    let long = frame.height().max(frame.width());
    if long <= cap {
        return (frame.clone(), 1.0);
    }
    let scale = cap as f64 / long as f64;
    let h = ((frame.height() as f64 * scale).round() as usize).max(1);
    let w = ((frame.width() as f64 * scale).round() as usize).max(1);
    (frame.resize(h, w), scale)
}

pub fn detect_faces(
    frame: &ImageBuffer,
    scorers: CascadeScorers<'_>,
    config: &CascadeConfig,
) -> Result<Vec<Detection>, DetectError> {
    detect_faces_traced(frame, scorers, config).map(|(d, _)| d)
}

#[derive(Clone, Debug)]
struct Candidate {
    bbox: BoundingBox,
    landmarks: Option<[(f64, f64); 5]>,
}

pub fn detect_faces_traced(
    frame: &ImageBuffer,
    scorers: CascadeScorers<'_>,
    config: &CascadeConfig,
) -> Result<(Vec<Detection>, CascadeTrace), DetectError> {
    config.validate()?;
    let (work, scale) = dynamic_resize(frame, config.detector_input_cap);
    let mut trace = CascadeTrace {
        resize_scale: scale,
        ..Default::default()
    };

    let stage1 = propose(&work, scorers.proposal, config, &mut trace)?;
    trace.stage_counts[0] = stage1.len();

    let stage2 = refine(
        &work,
        &stage1,
        scorers.refine,
        Stage::Refine.input_size(),
        1,
        config,
        false,
    )?;
    trace.stage_counts[1] = stage2.len();

    let stage3 = refine(
        &work,
        &stage2,
        scorers.output,
        Stage::Output.input_size(),
        2,
        config,
        true,
    )?;
    trace.stage_counts[2] = stage3.len();

    let inv = 1.0 / scale;
    let mut out = Vec::with_capacity(stage3.len());
    for c in stage3 {
        let Some(b) = c.bbox.clipped(work.width(), work.height()) else {
            continue;
        };
        let Some(b) = b
            .scaled(inv, inv)
            .ok()
            .and_then(|b| b.clipped(frame.width(), frame.height()))
        else {
            continue;
        };
        let pts = c.landmarks.expect("output stage always yields landmarks");
        let pts = pts.map(|(x, y)| (x * inv, y * inv));
        out.push(Detection {
            bbox: b,
            landmarks: Landmarks::clamped(pts, frame.width(), frame.height()),
        });
    }
    Ok((out, trace))
}

fn check_output(out: &StageOutput, stage: usize) -> Result<(), DetectError> {
    if !(0.0..=1.0).contains(&out.p_face) {
        return Err(DetectError::Scorer(format!(
            "stage {} p_face {} outside [0, 1]",
            stage + 1,
            out.p_face
        )));
    }
    if out.offsets.iter().any(|o| !o.is_finite()) {
        return Err(DetectError::Scorer(format!(
            "stage {} produced non-finite offsets",
            stage + 1
        )));
    }
    match (stage, &out.landmarks) {
        (2, None) => Err(DetectError::Scorer("output stage must return landmarks".into())),
        (0 | 1, Some(_)) => Err(DetectError::Scorer(format!(
            "stage {} must not return landmarks",
            stage + 1
        ))),
        _ => Ok(()),
    }
}

fn propose(
    work: &ImageBuffer,
    scorer: &dyn StageScorer,
    config: &CascadeConfig,
    trace: &mut CascadeTrace,
) -> Result<Vec<Candidate>, DetectError> {
    let input = config.pyramid.stage1_input;
    let scales = build_pyramid(work.height(), work.width(), &config.pyramid)?;
    trace.pyramid_levels = scales.len();
    let mut all = Vec::new();
    for s in scales {
        let hs = (work.height() as f64 * s).round() as usize;
        let ws = (work.width() as f64 * s).round() as usize;
        if hs < input || ws < input {
            continue;
        }
        let level = work.resize(hs, ws);
        let sx = work.width() as f64 / ws as f64;
        let sy = work.height() as f64 / hs as f64;
        let positions: Vec<(usize, usize)> = (0..=hs - input)
            .step_by(config.stride)
            .flat_map(|y| (0..=ws - input).step_by(config.stride).map(move |x| (x, y)))
            .collect();
        let patches: Vec<ImageBuffer> = positions
            .iter()
            .map(|&(x, y)| level.crop(x as i64, y as i64, (x + input) as i64, (y + input) as i64))
            .collect();
        let outputs = scorer.score_batch(&patches);
        let mut boxes = Vec::new();
        for (&(x, y), out) in positions.iter().zip(&outputs) {
            check_output(out, 0)?;
            if out.p_face < config.stage_thresholds[0] {
                continue;
            }
            let window = BoundingBox::new(
                x as f64 * sx,
                y as f64 * sy,
                (x + input) as f64 * sx,
                (y + input) as f64 * sy,
                out.p_face,
            )?;
            if let Ok(b) = apply_box_regression(&window, out.offsets) {
                boxes.push(b);
            }
        }
        all.extend(nms(&boxes, config.per_scale_nms, OverlapMode::Union));
    }
    Ok(nms(&all, config.nms_thresholds[0], config.nms_modes[0])
        .into_iter()
        .map(|bbox| Candidate { bbox, landmarks: None })
        .collect())
}

/// Square-pad, crop, resize to `size`, rescore, regress and suppress.
fn refine(
    work: &ImageBuffer,
    candidates: &[Candidate],
    scorer: &dyn StageScorer,
    size: usize,
    stage: usize,
    config: &CascadeConfig,
    with_landmarks: bool,
) -> Result<Vec<Candidate>, DetectError> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let squares: Vec<BoundingBox> = candidates.iter().map(|c| square_pad(&c.bbox)).collect();
    let patches: Vec<ImageBuffer> = squares.iter().map(|b| box_patch(work, b, size)).collect();
    let outputs = scorer.score_batch(&patches);
    let mut kept = Vec::new();
    for (sq, out) in squares.iter().zip(&outputs) {
        check_output(out, stage)?;
        if out.p_face < config.stage_thresholds[stage] {
            continue;
        }
        let Ok(bbox) = sq
            .with_confidence(out.p_face)
            .and_then(|b| apply_box_regression(&b, out.offsets))
        else {
            continue;
        };
        let landmarks = if with_landmarks {
            out.landmarks
                .map(|pts| pts.map(|(u, v)| (sq.x1() + u * sq.width(), sq.y1() + v * sq.height())))
        } else {
            None
        };
        kept.push(Candidate { bbox, landmarks });
    }
    let boxes: Vec<BoundingBox> = kept.iter().map(|c| c.bbox).collect();
    Ok(
        nms_indices(&boxes, config.nms_thresholds[stage], config.nms_modes[stage])
            .into_iter()
            .map(|i| kept[i].clone())
            .collect(),
    )
}

/// Crop `b` (zero-padded outside the frame) and resample to `size x size`.
pub fn box_patch(frame: &ImageBuffer, b: &BoundingBox, size: usize) -> ImageBuffer {
    let x0 = b.x1().round() as i64;
    let y0 = b.y1().round() as i64;
    let x1 = (b.x2().round() as i64).max(x0 + 1);
    let y1 = (b.y2().round() as i64).max(y0 + 1);
    frame.crop(x0, y0, x1, y1).resize(size, size)
}
