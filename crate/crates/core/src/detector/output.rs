use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cascade::Detection;
use super::DetectError;
use crate::types::{BoundingBox, Landmarks};

/// One detected face as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub confidence: f64,
    pub landmarks: [[f64; 2]; 5],
}

impl From<&Detection> for FrameDetection {
    fn from(d: &Detection) -> Self {
        Self {
            bbox: d.bbox.coords(),
            confidence: d.bbox.confidence(),
            landmarks: d.landmarks.points().map(|(x, y)| [x, y]),
        }
    }
}

impl FrameDetection {
    pub fn to_box(&self) -> Result<BoundingBox, DetectError> {
        let [x1, y1, x2, y2] = self.bbox;
        Ok(BoundingBox::new(x1, y1, x2, y2, self.confidence)?)
    }

    pub fn to_landmarks(&self, width: usize, height: usize) -> Result<Landmarks, DetectError> {
        Ok(Landmarks::new(self.landmarks.map(|[x, y]| (x, y)), width, height)?)
    }
}

/// Per-video detector output. JSON object keys are decimal frame indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoDetections {
    pub video_id: String,
    #[serde(with = "frame_keys")]
    pub frames: BTreeMap<usize, Vec<FrameDetection>>,
}

impl VideoDetections {
    pub fn new(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            frames: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, frame_index: usize, detections: &[Detection]) {
        self.frames
            .insert(frame_index, detections.iter().map(FrameDetection::from).collect());
    }

    pub fn face_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn load(path: &Path) -> Result<Self, DetectError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DetectError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("detections serialize");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

mod frame_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::FrameDetection;

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, Vec<FrameDetection>>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &Vec<FrameDetection>> = map.iter().map(|(k, v)| (k.to_string(), v)).collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, Vec<FrameDetection>>, D::Error> {
        let raw = BTreeMap::<String, Vec<FrameDetection>>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<usize>().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}
