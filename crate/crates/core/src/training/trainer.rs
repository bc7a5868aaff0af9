use std::path::PathBuf;
use std::sync::mpsc::sync_channel;

use facefake_nn::loss::bce_with_logits;
use facefake_nn::{Sgd, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::CropDataset;
use super::log::{LogRecord, StepRecord, TrainLog};
use super::sampler::balanced_batches;
use super::schedule::{poly_lr, smooth_labels};
use super::{TrainError, TrainingConfig};
use crate::aggregation::{aggregate_all, AggregationConfig};
use crate::classifier::{save_checkpoint, EfficientNet};
use crate::metrics::{log_loss, per_class_log_loss, roc_auc, LabeledPredictionSet};
use crate::types::FramePrediction;

const EVAL_BATCH: usize = 32;

/// Video-level holdout scores after aggregating frame predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationReport {
    pub step: usize,
    pub logloss_overall: f64,
    pub logloss_real: Option<f64>,
    pub logloss_fake: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainPaths {
    /// Best (or, without a holdout, final) weights.
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Training loss of every step.
    pub losses: Vec<f64>,
    pub validations: Vec<ValidationReport>,
    pub best: Option<ValidationReport>,
    /// Step count of the weights in the checkpoint.
    pub checkpoint_step: usize,
}

struct Prepared {
    indices: Vec<usize>,
    x: Tensor,
}

/// Score `data` with `model` and report video-level log loss and AUC.
pub fn validate(
    model: &EfficientNet,
    data: &CropDataset,
    agg: &AggregationConfig,
    step: usize,
) -> Result<ValidationReport, TrainError> {
    let mut frames = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let x = data.batch(chunk, &vec![false; chunk.len()]);
        for (&i, p) in chunk.iter().zip(model.predict(&x)?) {
            frames.push(FramePrediction::new(
                data.video_ids[i].clone(),
                data.frame_indices[i],
                p,
            ));
        }
    }
    let videos = aggregate_all(&frames, agg)?;
    let label_of: std::collections::HashMap<&str, u8> = data
        .video_ids
        .iter()
        .zip(&data.labels)
        .filter_map(|(v, l)| l.target().map(|t| (v.as_str(), t)))
        .collect();
    let pairs: Vec<(u8, f64)> = videos
        .iter()
        .filter_map(|v| label_of.get(v.video_id.as_str()).map(|&t| (t, v.p_fake)))
        .collect();
    let set = LabeledPredictionSet::new(pairs).map_err(|e| TrainError::Config(format!("holdout: {e}")))?;
    let per = per_class_log_loss(&set);
    Ok(ValidationReport {
        step,
        logloss_overall: log_loss(&set).map_err(|e| TrainError::Config(format!("holdout: {e}")))?,
        logloss_real: per.real,
        logloss_fake: per.fake,
        auc: roc_auc(&set).ok(),
    })
}

/// Train `model` in place on class-balanced batches.
///
/// Batches are assembled (with random horizontal flips) on a producer thread
/// feeding a bounded queue. With a non-empty `holdout` the model is scored at
/// the configured cadence and at the last step, and the checkpoint keeps the
/// weights with the lowest overall holdout log loss; otherwise it keeps the
/// final weights.
pub fn train(
    model: &mut EfficientNet,
    data: &CropDataset,
    holdout: Option<&CropDataset>,
    cfg: &TrainingConfig,
    agg: &AggregationConfig,
    paths: &TrainPaths,
) -> Result<TrainOutcome, TrainError> {
    let variant = model.config().name.clone();
    cfg.validate(&variant)?;
    let batch_size = cfg.resolved_batch_size(&variant);
    let holdout = holdout.filter(|h| !h.is_empty());
    let mut sampler = balanced_batches(&data.labels, batch_size, cfg.seed)?;
    let mut log = TrainLog::create(paths.log.as_deref())?;
    let mut sgd = Sgd::new(cfg.momentum);
    let mut model_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d6f_6465_6c00);
    let mut outcome = TrainOutcome {
        losses: Vec::with_capacity(cfg.total_steps),
        validations: Vec::new(),
        best: None,
        checkpoint_step: 0,
    };
    log::info!(
        "training {variant} on {} crops, batch {batch_size}, {} steps",
        data.len(),
        cfg.total_steps
    );

    std::thread::scope(|scope| -> Result<(), TrainError> {
        let (tx, rx) = sync_channel::<Prepared>(cfg.prefetch);
        scope.spawn(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x666c_6970);
            for _ in 0..cfg.total_steps {
                let indices = sampler.next().expect("sampler is endless");
                let flip: Vec<bool> = indices
                    .iter()
                    .map(|_| cfg.flip_augment && rng.random::<bool>())
                    .collect();
                let x = data.batch(&indices, &flip);
                if tx.send(Prepared { indices, x }).is_err() {
                    break;
                }
            }
        });

        for step in 0..cfg.total_steps {
            let batch = rx.recv().expect("producer yields every step");
            let lr = poly_lr(step, cfg.base_lr, cfg.total_steps, cfg.poly_power);
            let targets: Vec<f64> = batch
                .indices
                .iter()
                .map(|&i| smooth_labels(data.labels[i].target().unwrap_or(0), cfg.label_smoothing_eps))
                .collect();
            let logits = model.forward_train(&batch.x, &mut model_rng)?;
            let (loss, grad) = bce_with_logits(&logits, &targets);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    step,
                    lr,
                    batch_ids: batch.indices.iter().map(|&i| data.names[i].clone()).collect(),
                });
            }
            model.backward_logits(&grad);
            sgd.step(model, lr);
            outcome.losses.push(loss);
            log.write(&LogRecord::Step(StepRecord { step, lr, loss }))?;

            let done = step + 1;
            if let Some(h) = holdout {
                if done % cfg.validation_every == 0 || done == cfg.total_steps {
                    let report = validate(model, h, agg, done)?;
                    log::info!(
                        "step {done}: holdout log loss {:.4}, auc {:?}",
                        report.logloss_overall,
                        report.auc
                    );
                    log.write(&LogRecord::Validation(report.clone()))?;
                    let better = outcome
                        .best
                        .as_ref()
                        .is_none_or(|b| report.logloss_overall < b.logloss_overall);
                    if better {
                        if let Some(p) = &paths.checkpoint {
                            save_checkpoint(model, done, p)?;
                        }
                        outcome.checkpoint_step = done;
                        outcome.best = Some(report.clone());
                    }
                    outcome.validations.push(report);
                }
            } else if done == cfg.total_steps {
                if let Some(p) = &paths.checkpoint {
                    save_checkpoint(model, done, p)?;
                }
                outcome.checkpoint_step = done;
            }
        }
        drop(rx);
        Ok(())
    })?;
    Ok(outcome)
}
