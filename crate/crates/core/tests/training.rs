use std::collections::BTreeSet;

use facefake_core::aggregation::AggregationConfig;
use facefake_core::classifier::{build_named, EfficientNet};
use facefake_core::manifest::{DatasetManifest, ManifestEntry};
use facefake_core::training::{
    balanced_batches, poly_lr, smooth_labels, split_by_folder, train, CropDataset, LogRecord, TrainError, TrainLog,
    TrainPaths, TrainingConfig,
};
use facefake_core::{ImageBuffer, Label};
use facefake_nn::loss::bce_with_logits;
use facefake_nn::{Layer, Sgd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model(seed: u64) -> EfficientNet {
    EfficientNet::new(build_named("B0", 0.1).unwrap().with_resolution(16), seed).unwrap()
}

/// Fakes carry a bright seam ring, reals do not; each video has four frames.
fn toy_data(videos: usize, seed: u64) -> CropDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = CropDataset::default();
    for v in 0..videos {
        let fake = v % 2 == 1;
        for f in 0..4 {
            let base = rng.random_range(90.0..160.0);
            let mut img = ImageBuffer::filled(16, 16, 3, base);
            for y in 0..16 {
                for x in 0..16 {
                    let r = ((y as f64 - 7.5).powi(2) + (x as f64 - 7.5).powi(2)).sqrt();
                    if fake && (4.5..6.0).contains(&r) {
                        for c in 0..3 {
                            img.set(y, x, c, 250.0);
                        }
                    }
                }
            }
            let label = if fake { Label::Fake } else { Label::Real };
            d.push(img, label, &format!("v{v:02}"), f);
        }
    }
    d
}

fn trainable(m: &EfficientNet) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    m.visit_params(&mut |p| {
        if p.is_trainable() {
            out.push(p.value.clone());
        }
    });
    out
}

fn quick(steps: usize) -> TrainingConfig {
    TrainingConfig {
        total_steps: steps,
        batch_size: Some(8),
        validation_every: 25,
        ..TrainingConfig::default()
    }
}

#[test]
fn schedule_and_smoothing_properties() {
    for power in [0.5, 1.0, 2.0, 3.7] {
        let lrs: Vec<f64> = (0..=120).map(|s| poly_lr(s, 0.01, 100, power)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(lrs[0], 0.01);
        assert_eq!(lrs[100], 0.0);
    }
    for eps in [0.0, 0.05, 0.2, 0.49] {
        for y in [0, 1] {
            let s = smooth_labels(y, eps);
            assert!(eps / 2.0 <= s && s <= 1.0 - eps / 2.0);
        }
    }
}

#[test]
fn thousand_batches_stay_balanced_under_skew() {
    let mut labels = vec![Label::Real; 500];
    labels.extend(vec![Label::Fake; 50]);
    for batch in balanced_batches(&labels, 16, 4).unwrap().take(1000) {
        let fakes = batch.iter().filter(|&&i| labels[i] == Label::Fake).count();
        assert_eq!((fakes, batch.len()), (8, 16));
    }
    let mut labels = vec![Label::Fake; 400];
    labels.extend(vec![Label::Real; 40]);
    for batch in balanced_batches(&labels, 6, 5).unwrap().take(1000) {
        assert_eq!(batch.iter().filter(|&&i| labels[i] == Label::Real).count(), 3);
    }
}

#[test]
fn zero_momentum_is_plain_gradient_descent() {
    let data = toy_data(4, 1);
    let idx: Vec<usize> = (0..8).collect();
    let x = data.batch(&idx, &[false; 8]);
    let y: Vec<f64> = idx.iter().map(|&i| data.labels[i].target().unwrap() as f64).collect();
    let mut a = tiny_model(2);
    let mut b = tiny_model(2);
    let mut sgd = Sgd::new(0.0);
    for step in 0..5 {
        let lr = 0.05 / (step + 1) as f64;
        for (m, use_sgd) in [(&mut a, true), (&mut b, false)] {
            let mut rng = ChaCha8Rng::seed_from_u64(step);
            let logits = m.forward_train(&x, &mut rng).unwrap();
            let (_, g) = bce_with_logits(&logits, &y);
            m.zero_grad();
            m.backward_logits(&g);
            if use_sgd {
                sgd.step(m, lr);
            } else {
                m.visit_params_mut(&mut |p| {
                    if p.is_trainable() {
                        let g = p.grad().to_vec();
                        p.value.iter_mut().zip(&g).for_each(|(v, g)| *v -= lr * g);
                    }
                });
            }
        }
        assert_eq!(trainable(&a), trainable(&b), "step {step}");
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let mut m = tiny_model(3);
    let before = trainable(&m);
    let cfg = TrainingConfig {
        base_lr: 0.0,
        ..quick(12)
    };
    train(
        &mut m,
        &toy_data(6, 2),
        None,
        &cfg,
        &AggregationConfig::default(),
        &TrainPaths::default(),
    )
    .unwrap();
    assert_eq!(trainable(&m), before);
}

#[test]
fn one_batch_overfits_in_two_hundred_steps() {
    let mut m = tiny_model(4);
    let data = toy_data(2, 3);
    let cfg = TrainingConfig {
        base_lr: 0.02,
        flip_augment: false,
        ..quick(200)
    };
    let out = train(
        &mut m,
        &data,
        None,
        &cfg,
        &AggregationConfig::default(),
        &TrainPaths::default(),
    )
    .unwrap();
    let first = out.losses[0];
    let tail = out.losses[190..].iter().sum::<f64>() / 10.0;
    assert!(tail < first, "{first} -> {tail}");
}

#[test]
fn holdout_validation_log_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let paths = TrainPaths {
        checkpoint: Some(dir.path().join("best.ffp")),
        log: Some(dir.path().join("train.jsonl")),
    };
    let mut m = tiny_model(5);
    let out = train(
        &mut m,
        &toy_data(8, 4),
        Some(&toy_data(4, 5)),
        &quick(60),
        &AggregationConfig::default(),
        &paths,
    )
    .unwrap();
    assert_eq!(out.validations.iter().map(|v| v.step).collect::<Vec<_>>(), [25, 50, 60]);
    let best = out.best.clone().unwrap();
    assert!(out
        .validations
        .iter()
        .all(|v| v.logloss_overall >= best.logloss_overall));
    assert_eq!(best.step, out.checkpoint_step);
    for v in &out.validations {
        let (r, f) = (v.logloss_real.unwrap(), v.logloss_fake.unwrap());
        assert!(r.min(f) - 1e-12 <= v.logloss_overall && v.logloss_overall <= r.max(f) + 1e-12);
    }
    let (_, ck) = facefake_core::classifier::load_checkpoint(paths.checkpoint.as_ref().unwrap()).unwrap();
    assert_eq!(ck.step, best.step);

    let records = TrainLog::read(paths.log.as_ref().unwrap()).unwrap();
    let steps = records.iter().filter(|r| matches!(r, LogRecord::Step(_))).count();
    assert_eq!((steps, records.len()), (60, 63));
    let text = std::fs::read_to_string(paths.log.as_ref().unwrap()).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(
        first.as_object().unwrap().keys().collect::<Vec<_>>(),
        ["loss", "lr", "step"]
    );
}

#[test]
fn exploding_updates_abort_with_a_diagnostic() {
    let mut m = tiny_model(6);
    let cfg = TrainingConfig {
        base_lr: 1e250,
        momentum: 0.0,
        ..quick(10)
    };
    let err = train(
        &mut m,
        &toy_data(4, 6),
        None,
        &cfg,
        &AggregationConfig::default(),
        &TrainPaths::default(),
    )
    .unwrap_err();
    match err {
        TrainError::NonFinite { step, lr, batch_ids } => {
            assert!(step >= 1 && lr > 0.0);
            assert_eq!(batch_ids.len(), 8);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn folder_split_matches_construction() {
    let entries: Vec<ManifestEntry> = (0..50)
        .map(|i| ManifestEntry {
            crop_path: format!("crops/{i}.png"),
            video_id: format!("v{}", i / 5),
            frame_index: i % 5,
            label: if (i / 5) % 2 == 0 { Label::Real } else { Label::Fake },
            original_video_id: None,
            folder: Some(((i / 5) % 5) as u32),
        })
        .collect();
    let m = DatasetManifest::new(entries);
    let (train_m, val) = split_by_folder(&m, &[0, 1, 2].into());
    let val_videos: BTreeSet<&str> = val.video_ids().into_iter().collect();
    assert_eq!(val_videos, ["v0", "v1", "v2", "v5", "v6", "v7"].into());
    assert_eq!(train_m.len(), 20);
    let (all, none) = split_by_folder(&m, &BTreeSet::new());
    assert_eq!((all.len(), none.len()), (50, 0));
}
