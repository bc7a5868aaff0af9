use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backbone::BackboneConfig;
use super::model::EfficientNet;
use super::ClassifierError;
use crate::archive::Archive;

const KIND: &str = "classifier";

/// Archived alongside the weights so a checkpoint rebuilds its own model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub backbone: BackboneConfig,
    /// Training step the weights were taken at.
    pub step: usize,
}

pub fn save_checkpoint(model: &EfficientNet, step: usize, path: &Path) -> Result<(), ClassifierError> {
    let cfg = CheckpointConfig {
        backbone: model.config().clone(),
        step,
    };
    Archive::capture(KIND, &cfg, model).save(path)?;
    Ok(())
}

/// Rebuild the model described by the archive and load its weights after
/// checking every tensor name and shape.
pub fn load_checkpoint(path: &Path) -> Result<(EfficientNet, CheckpointConfig), ClassifierError> {
    let archive = Archive::load(path)?;
    archive.expect_kind(KIND)?;
    let cfg: CheckpointConfig = archive.config()?;
    let mut model = EfficientNet::new(cfg.backbone.clone(), 0)?;
    archive.restore(&mut model)?;
    Ok((model, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::backbone::build_named;
    use facefake_nn::Tensor;

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ffp");
        let model = EfficientNet::new(build_named("B0", 0.1).unwrap().with_resolution(32), 4).unwrap();
        save_checkpoint(&model, 12, &path).unwrap();
        let (back, cfg) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg.step, 12);
        let x = Tensor::filled(model.input_shape(2), 0.5);
        assert_eq!(model.predict(&x).unwrap(), back.predict(&x).unwrap());

        // Same tensors, but the header claims a wider head.
        let mut archive = Archive::load(&path).unwrap();
        archive.config["backbone"]["head_channels"] = serde_json::json!(256);
        archive.save(&path).unwrap();
        let err = load_checkpoint(&path).err().unwrap().to_string();
        assert!(err.contains("shape mismatch"), "{err}");
    }
}
