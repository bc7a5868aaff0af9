use std::path::Path;

use facefake_nn::par;

use super::TrainError;
use crate::image::{batch_tensor, ImageBuffer};
use crate::manifest::DatasetManifest;
use crate::types::Label;
use facefake_nn::Tensor;

/// Face crops held in memory at the model resolution.
#[derive(Clone, Debug, Default)]
pub struct CropDataset {
    pub images: Vec<ImageBuffer>,
    pub labels: Vec<Label>,
    pub video_ids: Vec<String>,
    pub frame_indices: Vec<usize>,
    /// Identifiers reported when a batch fails (crop paths when loaded from disk).
    pub names: Vec<String>,
}

impl CropDataset {
    /// Load every crop of `manifest` (paths relative to `root`), resized to a
    /// `resolution` square, decoding in parallel.
    pub fn load(manifest: &DatasetManifest, root: &Path, resolution: usize) -> Result<Self, TrainError> {
        let images = par::map_slice(&manifest.entries, |e| {
            ImageBuffer::load_png(&root.join(&e.crop_path)).map(|img| to_rgb(&img).resize(resolution, resolution))
        });
        let images = images.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            images,
            labels: manifest.entries.iter().map(|e| e.label).collect(),
            video_ids: manifest.entries.iter().map(|e| e.video_id.clone()).collect(),
            frame_indices: manifest.entries.iter().map(|e| e.frame_index).collect(),
            names: manifest.entries.iter().map(|e| e.crop_path.clone()).collect(),
        })
    }

    pub fn push(&mut self, image: ImageBuffer, label: Label, video_id: &str, frame_index: usize) {
        self.names
            .push(format!("{video_id}/{frame_index}#{}", self.images.len()));
        self.images.push(image);
        self.labels.push(label);
        self.video_ids.push(video_id.to_string());
        self.frame_indices.push(frame_index);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stack the selected crops, mirroring those with `flip[k]` set.
    pub fn batch(&self, indices: &[usize], flip: &[bool]) -> Tensor {
        let imgs: Vec<ImageBuffer> = indices
            .iter()
            .zip(flip)
            .map(|(&i, &f)| {
                if f {
                    self.images[i].flip_horizontal()
                } else {
                    self.images[i].clone()
                }
            })
            .collect();
        batch_tensor(&imgs)
    }
}

pub(crate) fn to_rgb(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 3 {
        return img.clone();
    }
    let d: Vec<f32> = img.data().iter().flat_map(|&v| [v, v, v]).collect();
    ImageBuffer::from_clamped(img.height(), img.width(), 3, d, img.is_normalized())
}
