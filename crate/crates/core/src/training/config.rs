use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub poly_power: f64,
    pub total_steps: usize,
    /// Even; `None` picks the per-variant default.
    pub batch_size: Option<usize>,
    pub label_smoothing_eps: f64,
    pub holdout_folders: BTreeSet<u32>,
    pub seed: u64,
    /// Holdout evaluation cadence in steps; the last step is always evaluated.
    pub validation_every: usize,
    pub flip_augment: bool,
    /// Batches prepared ahead of the optimizer.
    pub prefetch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            poly_power: 1.0,
            total_steps: 2000,
            batch_size: None,
            label_smoothing_eps: 0.05,
            holdout_folders: [0, 1, 2].into(),
            seed: 0,
            validation_every: 200,
            flip_augment: true,
            prefetch: 4,
        }
    }
}

/// Default batch size per variant: larger models get smaller batches.
pub fn default_batch_size(variant: &str) -> usize {
    match variant.to_ascii_uppercase().as_str() {
        "B0" => 64,
        "B1" => 48,
        "B2" => 40,
        "B3" => 32,
        "B4" => 24,
        "B5" => 16,
        _ => 8,
    }
}

impl TrainingConfig {
    pub fn resolved_batch_size(&self, variant: &str) -> usize {
        self.batch_size.unwrap_or_else(|| default_batch_size(variant))
    }

    pub fn validate(&self, variant: &str) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.poly_power.is_nan() || self.poly_power <= 0.0 {
            return bad("poly_power must be positive");
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive");
        }
        let b = self.resolved_batch_size(variant);
        if b < 2 || !b.is_multiple_of(2) {
            return bad("batch_size must be even and at least 2");
        }
        if !(0.0..0.5).contains(&self.label_smoothing_eps) {
            return bad("label_smoothing_eps must lie in [0, 0.5)");
        }
        if self.validation_every == 0 || self.prefetch == 0 {
            return bad("validation_every and prefetch must be positive");
        }
        Ok(())
    }
}
