use serde::{Deserialize, Serialize};

/// Compound-scaling bases and coefficient: depth `alpha^phi`, width
/// `beta^phi`, resolution `gamma^phi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            alpha: 1.2,
            beta: 1.1,
            gamma: 1.15,
            phi: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Multipliers {
    pub depth: f64,
    pub width: f64,
    pub resolution: f64,
}

/// Accepted range of `alpha * beta^2 * gamma^2`.
pub const FLOPS_CONSTRAINT: (f64, f64) = (1.9, 2.1);

impl ScalingConfig {
    pub fn with_phi(phi: f64) -> Self {
        Self { phi, ..Self::default() }
    }

    /// `alpha * beta^2 * gamma^2`, the per-unit-phi FLOPs growth factor.
    pub fn flops_factor(&self) -> f64 {
        self.alpha * self.beta * self.beta * self.gamma * self.gamma
    }

    /// A warning message when the FLOPs factor leaves the accepted range.
    pub fn constraint_warning(&self) -> Option<String> {
        let f = self.flops_factor();
        let (lo, hi) = FLOPS_CONSTRAINT;
        (!(lo..=hi).contains(&f)).then(|| {
            format!(
                "alpha * beta^2 * gamma^2 = {f:.4} lies outside [{lo}, {hi}] (alpha {}, beta {}, gamma {})",
                self.alpha, self.beta, self.gamma
            )
        })
    }
}

/// Depth, width and resolution multipliers for `cfg`; logs a warning when the
/// bases break the FLOPs constraint.
pub fn compound_multipliers(cfg: &ScalingConfig) -> Multipliers {
    if let Some(w) = cfg.constraint_warning() {
        log::warn!("{w}");
    }
    Multipliers {
        depth: cfg.alpha.powf(cfg.phi),
        width: cfg.beta.powf(cfg.phi),
        resolution: cfg.gamma.powf(cfg.phi),
    }
}

pub const CHANNEL_DIVISOR: usize = 8;

/// Scale a channel count and round to a multiple of `divisor`, never dropping
/// more than 10% below the exact product.
pub fn round_width(channels: usize, width_mult: f64, divisor: usize) -> usize {
    let exact = channels as f64 * width_mult;
    let d = divisor as f64;
    let mut v = (((exact + d / 2.0) / d).floor() * d).max(d);
    if v < 0.9 * exact {
        v += d;
    }
    v as usize
}

/// `ceil(repeats * depth_mult)`, tolerant of floating-point products that land
/// a hair above an integer.
pub fn round_depth(repeats: usize, depth_mult: f64) -> usize {
    ((repeats as f64 * depth_mult - 1e-9).ceil() as usize).max(1)
}
