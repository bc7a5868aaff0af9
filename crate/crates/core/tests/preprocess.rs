use std::path::Path;

use facefake_core::detector::{BlobScorer, CascadeConfig, CascadeScorers, Stage};
use facefake_core::manifest::DatasetManifest;
use facefake_core::preprocess::materialize::{detections_path, MANIFEST_FILE};
use facefake_core::preprocess::{
    crop_with_margin, detect_video, list_videos, materialize_dataset, mean_ssim, sample_frames, ssim_map, ssim_values,
    MaterializeOptions, SamplingPlan, SsimParams, VideoInput,
};
use facefake_core::synth::{generate_video, write_dataset, SynthConfig};
use facefake_core::{BoundingBox, ImageBuffer, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageBuffer {
    let data = (0..h * w * 3).map(|_| rng.random_range(0..256) as f32).collect();
    ImageBuffer::new(h, w, 3, data, false).unwrap()
}

/// Direct double loop over the (border-truncated) window around one pixel.
fn naive_ssim(a: &ImageBuffer, b: &ImageBuffer, y: usize, x: usize, p: &SsimParams) -> f64 {
    let luma = |img: &ImageBuffer, yy: usize, xx: usize| {
        let px = img.pixel(yy, xx);
        0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
    };
    let r = p.window / 2;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for yy in y.saturating_sub(r)..=(y + r).min(a.height() - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(a.width() - 1) {
            xs.push(luma(a, yy, xx));
            ys.push(luma(b, yy, xx));
        }
    }
    let n = xs.len() as f64;
    let ma = xs.iter().sum::<f64>() / n;
    let mb = ys.iter().sum::<f64>() / n;
    let va = xs.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
    let vb = ys.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
    let cov = xs.iter().zip(&ys).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

#[test]
fn ssim_agrees_with_naive_oracle_on_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = SsimParams::default();
    let a = noise_image(&mut rng, 24, 31);
    let mut b = a.clone();
    for y in 5..15 {
        for x in 8..20 {
            b.set(y, x, 1, rng.random_range(0..256) as f32);
        }
    }
    let s = ssim_values(&a, &b, &p).unwrap();
    for (y, x) in [(0, 0), (10, 12), (23, 30), (3, 29), (12, 0)] {
        let want = naive_ssim(&a, &b, y, x, &p);
        assert!(
            (s[y * 31 + x] - want).abs() <= 1e-6,
            "({y}, {x}): {} vs {want}",
            s[y * 31 + x]
        );
    }
}

#[test]
fn ssim_identity_symmetry_and_range() {
    let p = SsimParams::default();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.random_range(7..30), rng.random_range(7..30));
        let a = noise_image(&mut rng, h, w);
        let b = noise_image(&mut rng, h, w);
        assert!(ssim_map(&a, &a, &p).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(ssim_map(&a, &b, &p).unwrap(), ssim_map(&b, &a, &p).unwrap());
        assert!(ssim_values(&a, &b, &p)
            .unwrap()
            .iter()
            .all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn crops_stay_inside_and_zero_margin_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frame = noise_image(&mut rng, 50, 70);
    for _ in 0..200 {
        let x1 = rng.random_range(-20.0..60.0);
        let y1 = rng.random_range(-20.0..40.0);
        let b = BoundingBox::new(
            x1,
            y1,
            x1 + rng.random_range(2.0..40.0),
            y1 + rng.random_range(2.0..40.0),
            1.0,
        )
        .unwrap();
        let Ok(c) = crop_with_margin(&frame, &b, rng.random_range(0.0..1.0), "v", 0, Label::Real) else {
            continue;
        };
        assert!(c.rect.x0 >= 0 && c.rect.y0 >= 0 && c.rect.x1 <= 70 && c.rect.y1 <= 50);
        assert_eq!((c.image.width(), c.image.height()), (c.rect.width(), c.rect.height()));
    }
    let b = BoundingBox::new(10.0, 5.0, 30.0, 25.0, 1.0).unwrap();
    let c = crop_with_margin(&frame, &b, 0.0, "v", 0, Label::Real).unwrap();
    assert_eq!((c.image.width(), c.image.height()), (20, 20));
    assert_eq!(c.image.pixel(0, 0), frame.pixel(5, 10));
    assert_eq!(c.image.pixel(19, 19), frame.pixel(24, 29));
}

#[test]
fn sampled_frames_increase_strictly() {
    for count in 1..120 {
        for n in 1..40 {
            let idx = sample_frames(count, &SamplingPlan::new(n)).unwrap();
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
            assert!(idx.iter().all(|&i| i < count));
            assert_eq!(idx.len(), n.min(count));
        }
    }
}

#[test]
fn synthetic_fakes_differ_structurally_from_their_originals() {
    let cfg = SynthConfig {
        n_videos: 10,
        frames_per_video: 4,
        seed: 7,
        ..SynthConfig::default()
    };
    let p = SsimParams::default();
    for i in cfg.n_real()..cfg.n_videos {
        let fake = generate_video(&cfg, i);
        let real = generate_video(&cfg, i - cfg.n_real());
        assert_eq!(fake.original.as_deref(), Some(real.id.as_str()));
        let mean: f64 = fake
            .frames
            .iter()
            .zip(&real.frames)
            .map(|(f, r)| mean_ssim(r, f, &p).unwrap())
            .sum::<f64>()
            / fake.frames.len() as f64;
        assert!(mean < 0.98, "{}: mean SSIM {mean}", fake.id);
    }
}

fn extract(data: &Path, out: &Path) -> facefake_core::preprocess::MaterializeReport {
    let meta = facefake_core::preprocess::source::load_metadata(&data.join("metadata.json")).unwrap();
    let s = Stage::ALL.map(BlobScorer::synthetic_faces);
    let scorers = CascadeScorers::new(&s[0], &s[1], &s[2]);
    let mut inputs = Vec::new();
    for v in list_videos(data, None, out).unwrap() {
        let d = detect_video(&v, scorers, &CascadeConfig::default(), &SamplingPlan::default()).unwrap();
        d.save(&detections_path(out, &v.video_id)).unwrap();
        let rec = &meta[&v.video_id];
        inputs.push(VideoInput {
            video: v,
            label: rec.label,
            original: rec.original.clone(),
            folder: rec.folder,
        });
    }
    materialize_dataset(&inputs, out, &MaterializeOptions::default()).unwrap()
}

#[test]
fn paired_videos_yield_crops_masks_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_videos: 2,
        frames_per_video: 4,
        seed: 3,
        ..SynthConfig::default()
    };
    write_dataset(&cfg, &dir.path().join("data")).unwrap();
    let out = dir.path().join("out");
    let report = extract(&dir.path().join("data"), &out);
    assert_eq!(report.crops_written, 8);
    assert_eq!(report.masks_written, 4);
    assert!(report.failures.is_empty());
    let m = DatasetManifest::load_validated(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.len(), 8);
    assert_eq!(m.count(Label::Fake), 4);
    for e in &m.entries {
        assert!(out.join(&e.crop_path).is_file());
    }
    let first = std::fs::read(out.join(MANIFEST_FILE)).unwrap();
    extract(&dir.path().join("data"), &out);
    assert_eq!(std::fs::read(out.join(MANIFEST_FILE)).unwrap(), first);
}

#[test]
fn manifest_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_videos: 4,
        frames_per_video: 2,
        seed: 11,
        ..SynthConfig::default()
    };
    write_dataset(&cfg, &dir.path().join("data")).unwrap();
    let report = extract(&dir.path().join("data"), &dir.path().join("out"));
    let path = dir.path().join("copy.json");
    report.manifest.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), report.manifest);
}
