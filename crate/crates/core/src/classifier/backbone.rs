use serde::{Deserialize, Serialize};

use super::scaling::{compound_multipliers, round_depth, round_width, ScalingConfig, CHANNEL_DIVISOR};
use super::ClassifierError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub expansion: usize,
    pub channels_out: usize,
    pub repeats: usize,
    pub stride: usize,
    pub kernel: usize,
    pub se_ratio: f64,
}

/// The fully resolved layer plan of a scaled MBConv backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub name: String,
    pub stages: Vec<StageConfig>,
    pub stem_channels: usize,
    pub head_channels: usize,
    pub input_resolution: usize,
    pub dropout: f64,
    /// Stochastic-depth rate of the last block; earlier blocks scale linearly.
    pub drop_connect_rate: f64,
    pub width_mult: f64,
    pub depth_mult: f64,
    pub width_budget: f64,
}

/// `(expansion, channels_out, repeats, stride, kernel)` of the unscaled plan.
pub const BASE_PLAN: [(usize, usize, usize, usize, usize); 7] = [
    (1, 16, 1, 1, 3),
    (6, 24, 2, 2, 3),
    (6, 40, 2, 2, 5),
    (6, 80, 3, 2, 3),
    (6, 112, 3, 1, 5),
    (6, 192, 4, 2, 5),
    (6, 320, 1, 1, 3),
];
pub const BASE_STEM: usize = 32;
pub const BASE_HEAD: usize = 1280;
pub const BASE_RESOLUTION: usize = 224;
pub const SE_RATIO: f64 = 0.25;
pub const DROP_CONNECT_RATE: f64 = 0.2;

/// Named variant: `(name, width_mult, depth_mult, resolution, dropout)`.
pub const VARIANTS: [(&str, f64, f64, usize, f64); 8] = [
    ("B0", 1.0, 1.0, 224, 0.2),
    ("B1", 1.0, 1.1, 240, 0.2),
    ("B2", 1.1, 1.2, 260, 0.3),
    ("B3", 1.2, 1.4, 300, 0.3),
    ("B4", 1.4, 1.8, 380, 0.4),
    ("B5", 1.6, 2.2, 456, 0.4),
    ("B6", 1.8, 2.6, 528, 0.5),
    ("B7", 2.0, 3.1, 600, 0.5),
];

pub const DEFAULT_VARIANT: &str = "B5";

/// What to scale from: a row of the variant table or explicit compound scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantSpec {
    Named(String),
    Custom(ScalingConfig),
}

impl BackboneConfig {
    /// Number of MBConv blocks after depth scaling.
    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.repeats).sum()
    }

    /// Same topology at another input resolution.
    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.input_resolution = resolution;
        self
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::Config(m));
        if self.stages.is_empty() {
            return bad("backbone has no stages".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !matches!(s.stride, 1 | 2) {
                return bad(format!("stage {i}: stride {} not in {{1, 2}}", s.stride));
            }
            if s.kernel % 2 == 0 || s.repeats == 0 || s.expansion == 0 || s.channels_out == 0 {
                return bad(format!("stage {i}: invalid kernel/repeats/expansion/channels"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.drop_connect_rate) {
            return bad("dropout rates must lie in [0, 1)".into());
        }
        if self.input_resolution < 8 {
            return bad(format!("input resolution {} too small", self.input_resolution));
        }
        Ok(())
    }
}

fn scaled(
    name: String,
    width: f64,
    depth: f64,
    resolution: usize,
    dropout: f64,
    budget: f64,
) -> Result<BackboneConfig, ClassifierError> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(ClassifierError::Config(format!(
            "width_budget {budget} must lie in (0, 1]"
        )));
    }
    let ch = |c: usize| {
        let w = round_width(c, width, CHANNEL_DIVISOR);
        if budget < 1.0 {
            round_width(w, budget, CHANNEL_DIVISOR)
        } else {
            w
        }
    };
    let stages = BASE_PLAN
        .iter()
        .map(|&(expansion, c, repeats, stride, kernel)| StageConfig {
            expansion,
            channels_out: ch(c),
            repeats: round_depth(repeats, depth),
            stride,
            kernel,
            se_ratio: SE_RATIO,
        })
        .collect();
    let cfg = BackboneConfig {
        name,
        stages,
        stem_channels: ch(BASE_STEM),
        head_channels: ch(BASE_HEAD),
        input_resolution: resolution,
        dropout,
        drop_connect_rate: DROP_CONNECT_RATE,
        width_mult: width,
        depth_mult: depth,
        width_budget: budget,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Resolve a variant into a backbone plan. `width_budget < 1` shrinks every
/// channel count (after variant rounding, re-rounded) while keeping topology.
pub fn build_variant(spec: &VariantSpec, width_budget: f64) -> Result<BackboneConfig, ClassifierError> {
    match spec {
        VariantSpec::Named(name) => {
            let &(n, w, d, r, p) = VARIANTS
                .iter()
                .find(|v| v.0.eq_ignore_ascii_case(name))
                .ok_or_else(|| ClassifierError::UnknownVariant(name.clone()))?;
            scaled(n.to_string(), w, d, r, p, width_budget)
        }
        VariantSpec::Custom(sc) => {
            let m = compound_multipliers(sc);
            let res = (BASE_RESOLUTION as f64 * m.resolution).round() as usize;
            scaled(format!("phi={}", sc.phi), m.width, m.depth, res, 0.2, width_budget)
        }
    }
}

pub fn build_named(name: &str, width_budget: f64) -> Result<BackboneConfig, ClassifierError> {
    build_variant(&VariantSpec::Named(name.to_string()), width_budget)
}
