use serde::{Deserialize, Serialize};

use super::DetectError;

/// Image-pyramid parameters for the proposal stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidSpec {
    pub min_face_size: usize,
    pub scale_factor: f64,
    pub stage1_input: usize,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self {
            min_face_size: 20,
            scale_factor: 0.709,
            stage1_input: 12,
        }
    }
}

impl PyramidSpec {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return Err(DetectError::Config(format!(
                "scale_factor {} must lie in (0, 1)",
                self.scale_factor
            )));
        }
        if self.stage1_input == 0 || self.min_face_size < self.stage1_input {
            return Err(DetectError::Config(format!(
                "min_face_size {} must be >= stage1_input {}",
                self.min_face_size, self.stage1_input
            )));
        }
        Ok(())
    }
}

/// Descending pyramid scales: the first maps `min_face_size` onto the stage-1
/// window, and levels continue while the scaled short side still fits a window.
pub fn build_pyramid(height: usize, width: usize, spec: &PyramidSpec) -> Result<Vec<f64>, DetectError> {
    spec.validate()?;
    let short = height.min(width) as f64;
    let input = spec.stage1_input as f64;
    let mut scales = Vec::new();
    let mut s = input / spec.min_face_size as f64;
    while short * s >= input {
        scales.push(s);
        s *= spec.scale_factor;
    }
    if scales.is_empty() {
        return Err(DetectError::EmptyPyramid { height, width });
    }
    Ok(scales)
}
