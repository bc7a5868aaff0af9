//! Binary cross-entropy log loss, precision/recall/F1, ROC AUC and the
//! comparison-table report.

pub mod table;

pub use table::{comparison_table, reference_rows, TableRow};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("metric needs at least one prediction")]
    Empty,
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("invalid prediction: {0}")]
    Invalid(String),
}

pub const DEFAULT_CLIP_EPS: f64 = 1e-15;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Video-level `(label, p_hat)` pairs; label 1 is FAKE.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPredictionSet {
    pairs: Vec<(u8, f64)>,
    clip_eps: f64,
}

impl LabeledPredictionSet {
    pub fn new(pairs: Vec<(u8, f64)>) -> Result<Self, MetricsError> {
        Self::with_clip(pairs, DEFAULT_CLIP_EPS)
    }

    pub fn with_clip(pairs: Vec<(u8, f64)>, clip_eps: f64) -> Result<Self, MetricsError> {
        for &(y, p) in &pairs {
            if y > 1 {
                return Err(MetricsError::Invalid(format!("label {y} is not 0 or 1")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(MetricsError::Invalid(format!("probability {p} outside [0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&clip_eps) {
            return Err(MetricsError::Invalid(format!("clip_eps {clip_eps} outside [0, 0.5)")));
        }
        Ok(Self { pairs, clip_eps })
    }

    pub fn from_slices(labels: &[u8], probs: &[f64]) -> Result<Self, MetricsError> {
        if labels.len() != probs.len() {
            return Err(MetricsError::Invalid(
                "labels and probabilities differ in length".into(),
            ));
        }
        Self::new(labels.iter().copied().zip(probs.iter().copied()).collect())
    }

    pub fn pairs(&self) -> &[(u8, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn subset(&self, label: u8) -> Self {
        Self {
            pairs: self.pairs.iter().copied().filter(|p| p.0 == label).collect(),
            clip_eps: self.clip_eps,
        }
    }
}

/// `-(1/n) sum [y ln p + (1 - y) ln(1 - p)]` with `p` clipped to `[eps, 1 - eps]`.
pub fn log_loss(s: &LabeledPredictionSet) -> Result<f64, MetricsError> {
    if s.is_empty() {
        return Err(MetricsError::Empty);
    }
    let eps = s.clip_eps;
    let mut terms: Vec<f64> = s
        .pairs
        .iter()
        .map(|&(y, p)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .collect();
    // Summing in value order makes the result independent of pair order.
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() / s.len() as f64)
}

/// Log loss restricted to each class; `None` when the class is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassLogLoss {
    pub real: Option<f64>,
    pub fake: Option<f64>,
}

pub fn per_class_log_loss(s: &LabeledPredictionSet) -> ClassLogLoss {
    ClassLogLoss {
        real: log_loss(&s.subset(0)).ok(),
        fake: log_loss(&s.subset(1)).ok(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Precision, recall and F1; a `0/0` ratio is reported as 0 with its flag set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub f1_degenerate: bool,
    pub confusion: Confusion,
}

pub fn confusion(s: &LabeledPredictionSet, threshold: f64) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for &(y, p) in &s.pairs {
        match (y == 1, p >= threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn prf_from_confusion(c: Confusion) -> PrecisionRecallF1 {
    let (precision, precision_degenerate) = ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let (recall, recall_degenerate) = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    let (f1, f1_degenerate) = ratio(2.0 * precision * recall, precision + recall);
    PrecisionRecallF1 {
        precision,
        recall,
        f1,
        precision_degenerate,
        recall_degenerate,
        f1_degenerate,
        confusion: c,
    }
}

/// Predict FAKE iff `p >= threshold`.
pub fn precision_recall_f1(s: &LabeledPredictionSet, threshold: f64) -> PrecisionRecallF1 {
    prf_from_confusion(confusion(s, threshold))
}

/// Trapezoidal ROC area over all distinct score thresholds. Tied scores move
/// the curve diagonally, so the area equals the Mann-Whitney statistic.
pub fn roc_auc(s: &LabeledPredictionSet) -> Result<f64, MetricsError> {
    let pos = s.pairs.iter().filter(|p| p.0 == 1).count();
    let neg = s.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut sorted = s.pairs.clone();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let (tp0, fp0) = (tp, fp);
        let score = sorted[i].1;
        while i < sorted.len() && sorted[i].1 == score {
            if sorted[i].0 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Ok(area / (pos * neg) as f64)
}

/// Evaluation summary written as JSON next to the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub logloss: f64,
    pub logloss_real: Option<f64>,
    pub logloss_fake: Option<f64>,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_videos: usize,
    pub threshold: f64,
}

pub fn evaluate(s: &LabeledPredictionSet, threshold: f64) -> Result<MetricsReport, MetricsError> {
    let logloss = log_loss(s)?;
    let per = per_class_log_loss(s);
    let prf = precision_recall_f1(s, threshold);
    for (flag, name) in [
        (prf.precision_degenerate, "precision"),
        (prf.recall_degenerate, "recall"),
        (prf.f1_degenerate, "F1"),
    ] {
        if flag {
            log::warn!("{name} is 0/0 at threshold {threshold}; reported as 0");
        }
    }
    Ok(MetricsReport {
        logloss,
        logloss_real: per.real,
        logloss_fake: per.fake,
        auc: roc_auc(s).ok(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        n_videos: s.len(),
        threshold,
    })
}
