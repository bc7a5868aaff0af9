//! Confidence-weighted fusion of frame probabilities into a video verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{FramePrediction, VideoPrediction};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregateError {
    #[error("no frame predictions to aggregate")]
    Empty,
    #[error("frame predictions mix video ids {0:?} and {1:?}")]
    MixedVideoIds(String, String),
    #[error("invalid aggregation config: {0}")]
    Config(String),
}

/// How a frame's confidence is read from its probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConfidenceMode {
    /// `max(p, 1 - p)`: confident in either direction.
    #[default]
    Folded,
    /// `p` itself: only confident-fake frames count as confident.
    Raw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fallback {
    /// Plain mean over every frame when all of them are discarded.
    #[default]
    MeanAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub low_conf: f64,
    pub high_conf: f64,
    pub high_weight: f64,
    pub base_weight: f64,
    pub fallback: Fallback,
    pub confidence_mode: ConfidenceMode,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            low_conf: 0.6,
            high_conf: 0.9,
            high_weight: 2.0,
            base_weight: 1.0,
            fallback: Fallback::MeanAll,
            confidence_mode: ConfidenceMode::Folded,
        }
    }
}

impl AggregationConfig {
    /// Plain averaging: nothing discarded, every weight equal.
    pub fn simple_mean() -> Self {
        Self {
            low_conf: 0.5,
            high_conf: 1.0,
            high_weight: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        if !(0.5 <= self.low_conf && self.low_conf <= self.high_conf && self.high_conf <= 1.0) {
            return Err(AggregateError::Config(format!(
                "need 0.5 <= low_conf ({}) <= high_conf ({}) <= 1",
                self.low_conf, self.high_conf
            )));
        }
        if !(self.high_weight >= 1.0 && self.base_weight > 0.0 && self.high_weight.is_finite()) {
            return Err(AggregateError::Config(
                "need high_weight >= 1 and base_weight > 0".into(),
            ));
        }
        Ok(())
    }

    fn confidence_of(&self, p: f64) -> f64 {
        match self.confidence_mode {
            ConfidenceMode::Folded => confidence(p),
            ConfidenceMode::Raw => p,
        }
    }
}

/// `max(p, 1 - p)`.
pub fn confidence(p: f64) -> f64 {
    p.max(1.0 - p)
}

/// Weighted mean computed as an offset from the smallest value over
/// value-sorted terms, so that frame order cannot change the result and a
/// constant input is reproduced exactly.
fn weighted_mean(mut terms: Vec<(f64, f64)>) -> f64 {
    terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let lo = terms[0].0;
    let hi = terms[terms.len() - 1].0;
    let wsum: f64 = terms.iter().map(|t| t.1).sum();
    let excess: f64 = terms.iter().map(|&(p, w)| w * (p - lo)).sum();
    (lo + excess / wsum).clamp(lo, hi)
}

/// Fuse the frames of one video: drop frames below `low_conf`, double-weight
/// (by `high_weight`) those at or above `high_conf`, and fall back to the
/// plain mean if nothing survives.
pub fn aggregate_video(preds: &[FramePrediction], cfg: &AggregationConfig) -> Result<VideoPrediction, AggregateError> {
    cfg.validate()?;
    let first = preds.first().ok_or(AggregateError::Empty)?;
    if let Some(other) = preds.iter().find(|p| p.video_id != first.video_id) {
        return Err(AggregateError::MixedVideoIds(
            first.video_id.clone(),
            other.video_id.clone(),
        ));
    }
    let kept: Vec<(f64, f64)> = preds
        .iter()
        .filter_map(|f| {
            let c = cfg.confidence_of(f.p_fake);
            (c >= cfg.low_conf).then(|| {
                let w = if c >= cfg.high_conf {
                    cfg.high_weight
                } else {
                    cfg.base_weight
                };
                (f.p_fake, w)
            })
        })
        .collect();
    let used = kept.len();
    let (p_fake, fallback_used) = if kept.is_empty() {
        (weighted_mean(preds.iter().map(|f| (f.p_fake, 1.0)).collect()), true)
    } else {
        (weighted_mean(kept), false)
    };
    Ok(VideoPrediction {
        video_id: first.video_id.clone(),
        p_fake,
        frames_used: used,
        frames_discarded: preds.len() - used,
        fallback_used,
    })
}

/// Group frames by video id and aggregate each group; output sorted by id.
pub fn aggregate_all(
    preds: &[FramePrediction],
    cfg: &AggregationConfig,
) -> Result<Vec<VideoPrediction>, AggregateError> {
    let mut groups: BTreeMap<&str, Vec<FramePrediction>> = BTreeMap::new();
    for p in preds {
        groups.entry(p.video_id.as_str()).or_default().push(p.clone());
    }
    groups.values().map(|g| aggregate_video(g, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(ps: &[f64]) -> Vec<FramePrediction> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| FramePrediction::new("v", i, p))
            .collect()
    }

    #[test]
    fn worked_examples() {
        let cfg = AggregationConfig::default();
        let v = aggregate_video(&frames(&[0.7; 5]), &cfg).unwrap();
        assert_eq!((v.p_fake, v.frames_discarded, v.fallback_used), (0.7, 0, false));

        let v = aggregate_video(&frames(&[0.95, 0.55, 0.40]), &cfg).unwrap();
        assert!((v.p_fake - 2.3 / 3.0).abs() < 1e-12);
        assert_eq!((v.frames_used, v.frames_discarded), (2, 1));

        let v = aggregate_video(&frames(&[0.55, 0.52, 0.58]), &cfg).unwrap();
        assert!((v.p_fake - 0.55).abs() < 1e-12);
        assert!(v.fallback_used);
    }

    #[test]
    fn errors() {
        let cfg = AggregationConfig::default();
        assert_eq!(aggregate_video(&[], &cfg), Err(AggregateError::Empty));
        let mut f = frames(&[0.1, 0.2]);
        f[1].video_id = "w".into();
        assert!(matches!(
            aggregate_video(&f, &cfg),
            Err(AggregateError::MixedVideoIds(..))
        ));
        let bad = AggregationConfig { low_conf: 0.95, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn confidence_is_folded() {
        assert_eq!(confidence(0.5), 0.5);
        assert_eq!(confidence(0.95), 0.95);
        assert!((confidence(0.05) - 0.95).abs() < 1e-15);
    }
}
