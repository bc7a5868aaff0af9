//! Deterministic heuristic scorers for scenes made of solid blobs on a
//! contrasting background (bright test squares, the synthetic faces).
//!
//! A pixel predicate separates foreground from background. The proposal stage
//! accepts a window when it wholly contains a blob of plausible fill and
//! regresses the window onto the blob's extent; the later stages score how
//! well the blob covers the centre of the patch and refine the box again.
//! Enclosed background pixels (eyes, mouth) count as part of the blob and
//! locate the landmarks at the output stage.

use std::collections::VecDeque;

use super::scorer::{Stage, StageOutput, StageScorer};
use crate::image::ImageBuffer;

pub type PixelPredicate = fn(&[f32]) -> bool;

#[derive(Clone, Copy, Debug)]
pub struct BlobScorer {
    predicate: PixelPredicate,
    stage: Stage,
    /// Fraction of its bounding box a perfect blob fills.
    expected_fill: f64,
    /// Smallest blob extent, as a fraction of the patch side, worth proposing.
    min_extent: f64,
}

fn bright(px: &[f32]) -> bool {
    let v = if px.len() == 3 {
        0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
    } else {
        px[0]
    };
    v > 127.0
}

fn skin(px: &[f32]) -> bool {
    px.len() == 3 && px[0] > 100.0 && px[0] > px[1].max(px[2]) + 25.0
}

impl BlobScorer {
    pub fn new(predicate: PixelPredicate, stage: Stage, expected_fill: f64) -> Self {
        Self {
            predicate,
            stage,
            expected_fill,
            min_extent: 0.25,
        }
    }

    /// Bright (luma > 127) squares on a dark background.
    pub fn bright_squares(stage: Stage) -> Self {
        Self::new(bright, stage, 1.0)
    }

    /// Red-dominant elliptical faces as drawn by [`crate::synth`].
    pub fn synthetic_faces(stage: Stage) -> Self {
        Self::new(skin, stage, std::f64::consts::FRAC_PI_4)
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    fn mask(&self, patch: &ImageBuffer) -> Vec<bool> {
        let k = if patch.is_normalized() { 255.0 } else { 1.0 };
        let c = patch.channels();
        patch
            .data()
            .chunks_exact(c)
            .map(|px| {
                let mut raw = [0.0f32; 3];
                for (r, v) in raw.iter_mut().zip(px) {
                    *r = v * k;
                }
                (self.predicate)(&raw[..c])
            })
            .collect()
    }

    fn propose(&self, patch: &ImageBuffer) -> StageOutput {
        let (h, w) = (patch.height(), patch.width());
        let mask = self.mask(patch);
        let Some(ext) = Extent::of(&mask, w, |m| m) else {
            return StageOutput::reject();
        };
        if ext.x0 == 0 || ext.y0 == 0 || ext.x1 == w - 1 || ext.y1 == h - 1 {
            return StageOutput::reject();
        }
        if (ext.width() as f64) < self.min_extent * w as f64 || (ext.height() as f64) < self.min_extent * h as f64 {
            return StageOutput::reject();
        }
        let count = mask.iter().filter(|&&m| m).count() as f64;
        let fill = count / (ext.width() * ext.height()) as f64;
        StageOutput {
            p_face: (fill / self.expected_fill).min(1.0),
            offsets: ext.offsets(w, h),
            landmarks: None,
        }
    }

    fn verify(&self, patch: &ImageBuffer) -> StageOutput {
        let (h, w) = (patch.height(), patch.width());
        let mask = self.mask(patch);
        let Some(seed) = central_seed(&mask, w, h) else {
            return if self.stage == Stage::Output {
                StageOutput {
                    landmarks: Some(CANONICAL_IN_BOX),
                    ..StageOutput::reject()
                }
            } else {
                StageOutput::reject()
            };
        };
        let component = flood(w, h, &[seed], |i| mask[i]);
        // Background reachable from the border; anything else is blob or hole.
        let border: Vec<usize> = (0..w)
            .flat_map(|x| [x, (h - 1) * w + x])
            .chain((0..h).flat_map(|y| [y * w, y * w + w - 1]))
            .filter(|&i| !component[i])
            .collect();
        let outside = flood(w, h, &border, |i| !component[i]);
        let solid: Vec<bool> = outside.iter().map(|&o| !o).collect();

        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (rx, ry) = (0.35 * w as f64, 0.45 * h as f64);
        let (mut inside, mut covered) = (0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    inside += 1;
                    covered += solid[y * w + x] as usize;
                }
            }
        }
        let p_face = if inside == 0 {
            0.0
        } else {
            covered as f64 / inside as f64
        };
        let ext = Extent::of(&solid, w, |m| m).expect("seed pixel is solid");
        let landmarks = (self.stage == Stage::Output).then(|| {
            let holes: Vec<bool> = solid.iter().zip(&component).map(|(&s, &c)| s && !c).collect();
            landmarks_from_holes(&holes, &ext, w, h)
        });
        StageOutput {
            p_face,
            offsets: ext.offsets(w, h),
            landmarks,
        }
    }
}

impl StageScorer for BlobScorer {
    fn score(&self, patch: &ImageBuffer) -> StageOutput {
        match self.stage {
            Stage::Proposal => self.propose(patch),
            Stage::Refine | Stage::Output => self.verify(patch),
        }
    }
}

/// Inclusive pixel extent of the set pixels of a mask.
#[derive(Clone, Copy, Debug)]
struct Extent {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Extent {
    fn of<T: Copy>(mask: &[T], w: usize, set: impl Fn(T) -> bool) -> Option<Self> {
        let mut e: Option<Extent> = None;
        for (i, &m) in mask.iter().enumerate() {
            if !set(m) {
                continue;
            }
            let (x, y) = (i % w, i / w);
            e = Some(match e {
                None => Extent {
                    x0: x,
                    y0: y,
                    x1: x,
                    y1: y,
                },
                Some(e) => Extent {
                    x0: e.x0.min(x),
                    y0: e.y0.min(y),
                    x1: e.x1.max(x),
                    y1: e.y1.max(y),
                },
            });
        }
        e
    }

    fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    /// Regression offsets that move the whole patch onto this extent.
    fn offsets(&self, w: usize, h: usize) -> [f64; 4] {
        let (w, h) = (w as f64, h as f64);
        [
            self.x0 as f64 / w,
            self.y0 as f64 / h,
            (self.x1 + 1) as f64 / w - 1.0,
            (self.y1 + 1) as f64 / h - 1.0,
        ]
    }
}

/// The foreground pixel nearest the patch centre, if one lies in the central half.
fn central_seed(mask: &[bool], w: usize, h: usize) -> Option<usize> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let limit = 0.25 * (w.min(h) as f64);
    let mut best: Option<(f64, usize)> = None;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let d = ((i % w) as f64 - cx).hypot((i / w) as f64 - cy);
        if d <= limit && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// 4-connected flood fill from `seeds` through pixels where `open` holds.
fn flood(w: usize, h: usize, seeds: &[usize], open: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if open(s) && !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !seen[j] && open(j) {
                seen[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    seen
}

/// Canonical landmark layout inside a face box, used when no features are visible.
const CANONICAL_IN_BOX: [(f64, f64); 5] = [(0.3, 0.38), (0.7, 0.38), (0.5, 0.55), (0.35, 0.75), (0.65, 0.75)];

fn centroid(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    Some((sx / n, sy / n))
}

fn landmarks_from_holes(holes: &[bool], ext: &Extent, w: usize, h: usize) -> [(f64, f64); 5] {
    let bx = ext.x0 as f64;
    let by = ext.y0 as f64;
    let bw = ext.width() as f64;
    let bh = ext.height() as f64;
    let mid_x = bx + bw / 2.0;
    let (mut left, mut right, mut mouth) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &hole) in holes.iter().enumerate() {
        if !hole {
            continue;
        }
        let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
        let v = (y - by) / bh;
        if v < 0.5 {
            if x < mid_x {
                left.push((x, y));
            } else {
                right.push((x, y));
            }
        } else if v > 0.6 {
            mouth.push((x, y));
        }
    }
    let canon = |k: usize| (bx + CANONICAL_IN_BOX[k].0 * bw, by + CANONICAL_IN_BOX[k].1 * bh);
    let le = centroid(&left).unwrap_or_else(|| canon(0));
    let re = centroid(&right).unwrap_or_else(|| canon(1));
    let (ml, mr) = match centroid(&mouth) {
        Some((_, my)) => {
            let xs = mouth.iter().map(|p| p.0);
            let lo = xs.clone().fold(f64::INFINITY, f64::min);
            let hi = xs.fold(f64::NEG_INFINITY, f64::max);
            ((lo, my), (hi, my))
        }
        None => (canon(3), canon(4)),
    };
    let eye_y = (le.1 + re.1) / 2.0;
    let mouth_y = (ml.1 + mr.1) / 2.0;
    let nose = ((le.0 + re.0) / 2.0, (eye_y + mouth_y) / 2.0);
    [le, re, nose, ml, mr].map(|(x, y)| (x / w as f64, y / h as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_patch(size: usize, x0: usize, y0: usize, side: usize) -> ImageBuffer {
        let mut img = ImageBuffer::filled(size, size, 3, 10.0);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                for c in 0..3 {
                    img.set(y, x, c, 240.0);
                }
            }
        }
        img
    }

    #[test]
    fn proposal_regresses_onto_square() {
        let s = BlobScorer::bright_squares(Stage::Proposal);
        let out = s.score(&square_patch(12, 2, 3, 6));
        assert_eq!(out.p_face, 1.0);
        let [a, b, c, d] = out.offsets;
        assert!((a - 2.0 / 12.0).abs() < 1e-12 && (b - 3.0 / 12.0).abs() < 1e-12);
        assert!((c - (8.0 / 12.0 - 1.0)).abs() < 1e-12 && (d - (9.0 / 12.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn proposal_rejects_blobs_cut_by_the_border() {
        let s = BlobScorer::bright_squares(Stage::Proposal);
        assert_eq!(s.score(&square_patch(12, 0, 3, 6)).p_face, 0.0);
        assert_eq!(s.score(&ImageBuffer::filled(12, 12, 3, 0.0)).p_face, 0.0);
    }

    #[test]
    fn verify_scores_coverage_and_emits_landmarks() {
        let s = BlobScorer::bright_squares(Stage::Output);
        let tight = s.score(&square_patch(48, 0, 0, 48));
        assert_eq!(tight.p_face, 1.0);
        assert_eq!(tight.offsets, [0.0; 4]);
        let lm = tight.landmarks.unwrap();
        assert!(lm
            .iter()
            .all(|&(x, y)| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)));

        let loose = s.score(&square_patch(48, 16, 16, 16));
        assert!(loose.p_face < 0.5);
        assert!(BlobScorer::bright_squares(Stage::Refine)
            .score(&square_patch(24, 0, 0, 24))
            .landmarks
            .is_none());
    }

    #[test]
    fn holes_count_as_blob_and_locate_eyes() {
        let mut img = square_patch(48, 0, 0, 48);
        for (cx, cy) in [(14usize, 16usize), (34, 16)] {
            for y in cy - 2..cy + 2 {
                for x in cx - 2..cx + 2 {
                    for c in 0..3 {
                        img.set(y, x, c, 0.0);
                    }
                }
            }
        }
        let out = BlobScorer::bright_squares(Stage::Output).score(&img);
        assert_eq!(out.p_face, 1.0);
        let lm = out.landmarks.unwrap();
        assert!((lm[0].0 * 48.0 - 14.0).abs() < 1e-9 && (lm[0].1 * 48.0 - 16.0).abs() < 1e-9);
        assert!((lm[1].0 * 48.0 - 34.0).abs() < 1e-9);
    }
}
