use facefake_core::detector::{
    detect_faces, detect_faces_traced, dynamic_resize, iou, nms, nms_indices, BlobScorer, CascadeConfig,
    CascadeScorers, OverlapMode, Stage, StageOutput,
};
use facefake_core::{BoundingBox, ImageBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<BoundingBox> {
    (0..n)
        .map(|_| {
            let x1 = rng.random_range(0.0..80.0);
            let y1 = rng.random_range(0.0..80.0);
            let w = rng.random_range(1.0..40.0);
            let h = rng.random_range(1.0..40.0);
            // A coarse confidence grid makes ties common.
            let c = rng.random_range(0..8) as f64 / 7.0;
            BoundingBox::new(x1, y1, x1 + w, y1 + h, c).unwrap()
        })
        .collect()
}

fn oracle_overlap(a: &BoundingBox, b: &BoundingBox, mode: OverlapMode) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.coords();
    let [bx1, by1, bx2, by2] = b.coords();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    let (aa, ba) = ((ax2 - ax1) * (ay2 - ay1), (bx2 - bx1) * (by2 - by1));
    let d = match mode {
        OverlapMode::Union => aa + ba - inter,
        OverlapMode::Min => aa.min(ba),
    };
    (inter / d).clamp(0.0, 1.0)
}

/// Box `i` survives iff no surviving box ranked ahead of it overlaps it beyond
/// the threshold; rank is confidence descending, then input position.
fn oracle_nms(boxes: &[BoundingBox], t: f64, mode: OverlapMode) -> Vec<usize> {
    let n = boxes.len();
    let ahead = |j: usize, i: usize| {
        boxes[j].confidence() > boxes[i].confidence() || (boxes[j].confidence() == boxes[i].confidence() && j < i)
    };
    let mut rank: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in a + 1..n {
            if ahead(rank[b], rank[a]) {
                rank.swap(a, b);
            }
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &rank {
        if kept.iter().all(|&k| oracle_overlap(&boxes[k], &boxes[i], mode) <= t) {
            kept.push(i);
        }
    }
    kept
}

#[test]
fn nms_matches_brute_force_oracle() {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..=20);
        let boxes = random_boxes(&mut rng, n);
        let t = rng.random_range(0.05..0.95);
        let mode = if seed % 2 == 0 {
            OverlapMode::Union
        } else {
            OverlapMode::Min
        };
        assert_eq!(nms_indices(&boxes, t, mode), oracle_nms(&boxes, t, mode), "seed {seed}");
    }
}

#[test]
fn nms_is_idempotent() {
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10_000);
        let n = rng.random_range(0..=20);
        let boxes = random_boxes(&mut rng, n);
        let once = nms(&boxes, 0.4, OverlapMode::Union);
        assert_eq!(nms(&once, 0.4, OverlapMode::Union), once);
    }
}

fn dark_frame(h: usize, w: usize) -> ImageBuffer {
    ImageBuffer::filled(h, w, 3, 20.0)
}

fn paint_square(img: &mut ImageBuffer, x0: usize, y0: usize, side: usize) {
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            for c in 0..3 {
                img.set(y, x, c, 230.0);
            }
        }
    }
}

fn square_scorers() -> [BlobScorer; 3] {
    Stage::ALL.map(BlobScorer::bright_squares)
}

fn truth(x0: usize, y0: usize, side: usize) -> BoundingBox {
    BoundingBox::new(x0 as f64, y0 as f64, (x0 + side) as f64, (y0 + side) as f64, 1.0).unwrap()
}

#[test]
fn one_square_gives_one_detection() {
    let s = square_scorers();
    let scorers = CascadeScorers::new(&s[0], &s[1], &s[2]);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x0, y0) = (rng.random_range(5..155), rng.random_range(5..155));
        let mut f = dark_frame(200, 200);
        paint_square(&mut f, x0, y0, 40);
        let dets = detect_faces(&f, scorers, &CascadeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1, "seed {seed}");
        let o = iou(&dets[0].bbox, &truth(x0, y0, 40), OverlapMode::Union);
        assert!(o >= 0.6, "seed {seed}: iou {o}");
    }
}

#[test]
fn two_squares_give_two_detections() {
    let s = square_scorers();
    let scorers = CascadeScorers::new(&s[0], &s[1], &s[2]);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let a = (rng.random_range(5..55), rng.random_range(5..155));
        let b = (rng.random_range(105..155), rng.random_range(5..155));
        let mut f = dark_frame(200, 200);
        paint_square(&mut f, a.0, a.1, 40);
        paint_square(&mut f, b.0, b.1, 40);
        let dets = detect_faces(&f, scorers, &CascadeConfig::default()).unwrap();
        assert_eq!(dets.len(), 2, "seed {seed}");
        for t in [truth(a.0, a.1, 40), truth(b.0, b.1, 40)] {
            let best = dets
                .iter()
                .map(|d| iou(&d.bbox, &t, OverlapMode::Union))
                .fold(0.0, f64::max);
            assert!(best >= 0.6, "seed {seed}: iou {best}");
        }
    }
}

/// Deterministic pseudo-random stage output keyed on patch content.
fn hashed(patch: &ImageBuffer, salt: u64, landmarks: bool) -> StageOutput {
    let mut h = salt ^ 0xcbf2_9ce4_8422_2325;
    for v in patch.data().iter().step_by(7) {
        h ^= v.to_bits() as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    StageOutput {
        p_face: rng.random_range(0.0..1.0),
        offsets: [0; 4].map(|_| rng.random_range(-0.2..0.2)),
        landmarks: landmarks.then(|| [0; 5].map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))),
    }
}

#[test]
fn cascade_counts_never_grow_and_landmarks_stay_inside() {
    let p = |x: &ImageBuffer| hashed(x, 1, false);
    let r = |x: &ImageBuffer| hashed(x, 2, false);
    let o = |x: &ImageBuffer| hashed(x, 3, true);
    let scorers = CascadeScorers::new(&p, &r, &o);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.random_range(30..90), rng.random_range(30..90));
        let data = (0..h * w * 3).map(|_| rng.random_range(0..256) as f32).collect();
        let frame = ImageBuffer::new(h, w, 3, data, false).unwrap();
        let cfg = CascadeConfig {
            stage_thresholds: [0.3, 0.4, 0.5],
            ..CascadeConfig::default()
        };
        let (dets, trace) = detect_faces_traced(&frame, scorers, &cfg).unwrap();
        let c = trace.stage_counts;
        assert!(c[1] <= c[0] && c[2] <= c[1], "seed {seed}: {c:?}");
        assert!(dets.len() <= c[2]);
        for d in &dets {
            for &(x, y) in d.landmarks.points() {
                assert!((0.0..=w as f64).contains(&x) && (0.0..=h as f64).contains(&y));
            }
            let [x1, y1, x2, y2] = d.bbox.coords();
            assert!(x1 >= 0.0 && y1 >= 0.0 && x2 <= w as f64 && y2 <= h as f64);
        }
    }
}

#[test]
fn detection_commutes_with_downscaling() {
    let s = square_scorers();
    let scorers = CascadeScorers::new(&s[0], &s[1], &s[2]);
    let mut big = dark_frame(960, 1280);
    paint_square(&mut big, 300, 200, 160);
    let cfg = CascadeConfig::default();
    let direct = detect_faces(&big, scorers, &cfg).unwrap();
    let (small, scale) = dynamic_resize(&big, 640);
    assert_eq!(scale, 0.5);
    let manual = detect_faces(&small, scorers, &cfg).unwrap();
    assert_eq!(direct.len(), 1);
    assert_eq!(manual.len(), 1);
    let a = direct[0].bbox.coords();
    let b = manual[0].bbox.scaled(1.0 / scale, 1.0 / scale).unwrap().coords();
    for k in 0..4 {
        assert!((a[k] - b[k]).abs() <= 2.0, "{a:?} vs {b:?}");
    }
}
