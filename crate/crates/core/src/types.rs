//! Value types shared across the pipeline. All are immutable after construction.

use serde::{Deserialize, Serialize};

use crate::image::ImageBuffer;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate box ({x1}, {y1}, {x2}, {y2})")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("landmark {name} at ({x}, {y}) outside {width}x{height} frame")]
    LandmarkOutOfFrame {
        name: &'static str,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
}

/// Axis-aligned box in continuous pixel coordinates with a detector confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    confidence: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Result<Self, GeometryError> {
        if !(x2 > x1 && y2 > y1) || ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::DegenerateBox { x1, y1, x2, y2 });
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::Confidence(confidence));
        }
        Ok(Self {
            x1,
            y1,
            x2,
            y2,
            confidence,
        })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }
    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn with_confidence(&self, confidence: f64) -> Result<Self, GeometryError> {
        Self::new(self.x1, self.y1, self.x2, self.y2, confidence)
    }

    /// Multiply every coordinate by per-axis factors.
    pub fn scaled(&self, sx: f64, sy: f64) -> Result<Self, GeometryError> {
        Self::new(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy, self.confidence)
    }

    /// Intersect with `[0, width] x [0, height]`; `None` if nothing remains.
    pub fn clipped(&self, width: usize, height: usize) -> Option<Self> {
        Self::new(
            self.x1.max(0.0),
            self.y1.max(0.0),
            self.x2.min(width as f64),
            self.y2.min(height as f64),
            self.confidence,
        )
        .ok()
    }
}

pub const LANDMARK_NAMES: [&str; 5] = ["left_eye", "right_eye", "nose", "mouth_left", "mouth_right"];

/// Five facial keypoints in frame pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    points: [(f64, f64); 5],
}

impl Landmarks {
    /// Points ordered as [`LANDMARK_NAMES`]; each must satisfy `0 <= x < width`, `0 <= y < height`.
    pub fn new(points: [(f64, f64); 5], width: usize, height: usize) -> Result<Self, GeometryError> {
        for (name, &(x, y)) in LANDMARK_NAMES.iter().zip(&points) {
            if !(x >= 0.0 && x < width as f64 && y >= 0.0 && y < height as f64) {
                return Err(GeometryError::LandmarkOutOfFrame {
                    name,
                    x,
                    y,
                    width,
                    height,
                });
            }
        }
        Ok(Self { points })
    }

    /// Clamp each point into the frame, then construct.
    pub fn clamped(points: [(f64, f64); 5], width: usize, height: usize) -> Self {
        let max_x = (width as f64 - 1e-6).max(0.0);
        let max_y = (height as f64 - 1e-6).max(0.0);
        let points = points.map(|(x, y)| {
            let x = if x.is_finite() { x.clamp(0.0, max_x) } else { 0.0 };
            let y = if y.is_finite() { y.clamp(0.0, max_y) } else { 0.0 };
            (x, y)
        });
        Self { points }
    }

    pub fn points(&self) -> &[(f64, f64); 5] {
        &self.points
    }

    pub fn left_eye(&self) -> (f64, f64) {
        self.points[0]
    }
    pub fn right_eye(&self) -> (f64, f64) {
        self.points[1]
    }
    pub fn nose(&self) -> (f64, f64) {
        self.points[2]
    }
    pub fn mouth_left(&self) -> (f64, f64) {
        self.points[3]
    }
    pub fn mouth_right(&self) -> (f64, f64) {
        self.points[4]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Real,
    Fake,
    /// Inference-time only; never valid in a training manifest.
    Unknown,
}

impl Label {
    /// Binary target: FAKE is the positive class.
    pub fn target(self) -> Option<u8> {
        match self {
            Label::Real => Some(0),
            Label::Fake => Some(1),
            Label::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "REAL",
            Label::Fake => "FAKE",
            Label::Unknown => "UNKNOWN",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "REAL" | "0" => Ok(Label::Real),
            "FAKE" | "1" => Ok(Label::Fake),
            "UNKNOWN" => Ok(Label::Unknown),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        (self.x1 - self.x0) as usize
    }

    pub fn height(&self) -> usize {
        (self.y1 - self.y0) as usize
    }
}

/// A margin-expanded face crop at source resolution, plus where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceCrop {
    pub image: ImageBuffer,
    pub video_id: String,
    pub frame_index: usize,
    pub source_box: BoundingBox,
    pub margin_fraction: f64,
    pub label: Label,
    /// The frame rectangle the crop was cut from.
    pub rect: PixelRect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub video_id: String,
    pub frame_index: usize,
    pub p_fake: f64,
}

impl FramePrediction {
    pub fn new(video_id: impl Into<String>, frame_index: usize, p_fake: f64) -> Self {
        assert!((0.0..=1.0).contains(&p_fake), "p_fake {p_fake} outside [0, 1]");
        Self {
            video_id: video_id.into(),
            frame_index,
            p_fake,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoPrediction {
    pub video_id: String,
    pub p_fake: f64,
    pub frames_used: usize,
    pub frames_discarded: usize,
    pub fallback_used: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_invariants() {
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 1.0, 0.5).is_ok());
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 1.0, 0.5).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 1.0, 1.5).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0, 0.5).is_err());
    }

    #[test]
    fn landmarks_must_be_in_frame() {
        let pts = [(1.0, 1.0); 5];
        assert!(Landmarks::new(pts, 10, 10).is_ok());
        let mut bad = pts;
        bad[4] = (10.0, 1.0);
        assert!(Landmarks::new(bad, 10, 10).is_err());
        let c = Landmarks::clamped(bad, 10, 10);
        assert!(c.mouth_right().0 < 10.0);
    }

    #[test]
    fn label_serializes_uppercase() {
        assert_eq!(serde_json::to_string(&Label::Fake).unwrap(), "\"FAKE\"");
        assert_eq!("real".parse::<Label>().unwrap(), Label::Real);
    }
}
