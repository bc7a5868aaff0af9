//! Small trainable convolutional stage scorers.
//!
//! Each network is a stack of stride-2 3x3 conv/BN/SiLU blocks, global
//! average pooling and one linear layer whose outputs are
//! `[face logit, dx1, dy1, dx2, dy2, (landmark x, y) x 5]`, the landmark
//! block being present for the output stage only.

use std::path::Path;

use facefake_nn::layers::ConvSpec;
use facefake_nn::loss::{bce_with_logits, masked_mse};
use facefake_nn::{BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Linear, Sequential, Sgd, Silu, Tensor};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cascade::box_patch;
use super::geometry::{iou, OverlapMode};
use super::scorer::{CascadeScorers, Stage, StageOutput, StageScorer};
use super::DetectError;
use crate::archive::Archive;
use crate::image::{batch_tensor, ImageBuffer};
use crate::types::BoundingBox;

const ARCHIVE_KIND: &str = "stage-scorer";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvScorerConfig {
    pub stage: Stage,
    /// Output channels of each stride-2 block.
    pub channels: Vec<usize>,
}

impl ConvScorerConfig {
    pub fn for_stage(stage: Stage) -> Self {
        let channels = match stage {
            Stage::Proposal => vec![8, 16, 32],
            Stage::Refine => vec![16, 32, 48],
            Stage::Output => vec![16, 32, 48, 64],
        };
        Self { stage, channels }
    }

    pub fn out_dim(&self) -> usize {
        if self.stage.has_landmarks() {
            15
        } else {
            5
        }
    }
}

pub struct ConvScorer {
    config: ConvScorerConfig,
    net: Sequential,
}

impl ConvScorer {
    pub fn new(config: ConvScorerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Sequential::new();
        let mut c_in = 3;
        for (i, &c) in config.channels.iter().enumerate() {
            net.push(Conv2d::new(
                &format!("block{i}.conv"),
                ConvSpec::new(c_in, c, 3).stride(2),
                &mut rng,
            ));
            net.push(BatchNorm2d::new(&format!("block{i}.bn"), c));
            net.push(Silu::new());
            c_in = c;
        }
        net.push(GlobalAvgPool::new());
        net.push(Linear::new("head", c_in, config.out_dim(), &mut rng));
        Self { config, net }
    }

    pub fn config(&self) -> &ConvScorerConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.config.stage
    }

    fn decode(&self, row: &[f64]) -> StageOutput {
        let landmarks = self.stage().has_landmarks().then(|| {
            let mut pts = [(0.0, 0.0); 5];
            for (k, p) in pts.iter_mut().enumerate() {
                *p = (row[5 + 2 * k], row[6 + 2 * k]);
            }
            pts
        });
        StageOutput {
            p_face: facefake_nn::layers::sigmoid(row[0]),
            offsets: [row[1], row[2], row[3], row[4]],
            landmarks,
        }
    }

    /// Minibatch SGD on `samples`; returns the loss of every step.
    pub fn train(&mut self, samples: &[PatchSample], opts: &DetectorTrainOptions) -> Result<Vec<f64>, DetectError> {
        if samples.is_empty() {
            return Err(DetectError::Config("no training patches".into()));
        }
        let size = self.stage().input_size();
        if samples
            .iter()
            .any(|s| s.patch.height() != size || s.patch.width() != size)
        {
            return Err(DetectError::Config(format!("training patches must be {size}x{size}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut sgd = Sgd::new(opts.momentum);
        let width = self.config.out_dim();
        let mut losses = Vec::with_capacity(opts.steps);
        for step in 0..opts.steps {
            let batch: Vec<&PatchSample> = (0..opts.batch_size)
                .map(|_| &samples[rng.random_range(0..samples.len())])
                .collect();
            let images: Vec<ImageBuffer> = batch.iter().map(|s| s.patch.clone()).collect();
            let out = self.net.forward(&batch_tensor(&images), &mut rng);
            let (loss, grad) = detector_loss(out.data(), &batch, width);
            if !loss.is_finite() {
                return Err(DetectError::Config(format!("non-finite detector loss at step {step}")));
            }
            losses.push(loss);
            self.net
                .backward(&Tensor::from_vec(out.shape(), grad).expect("grad matches output"));
            let lr = opts.lr * (1.0 - step as f64 / opts.steps as f64);
            sgd.step(&mut self.net, lr);
        }
        Ok(losses)
    }

    pub fn to_archive(&self) -> Archive {
        Archive::capture(ARCHIVE_KIND, &self.config, &self.net)
    }

    pub fn from_archive(archive: &Archive) -> Result<Self, DetectError> {
        let ck = |e: crate::archive::ArchiveError| DetectError::Checkpoint(e.to_string());
        archive.expect_kind(ARCHIVE_KIND).map_err(ck)?;
        let config: ConvScorerConfig = archive.config().map_err(ck)?;
        let mut scorer = Self::new(config, 0);
        archive.restore(&mut scorer.net).map_err(ck)?;
        Ok(scorer)
    }
}

impl StageScorer for ConvScorer {
    fn score(&self, patch: &ImageBuffer) -> StageOutput {
        self.score_batch(std::slice::from_ref(patch)).remove(0)
    }

    fn score_batch(&self, patches: &[ImageBuffer]) -> Vec<StageOutput> {
        let size = self.stage().input_size();
        let mut outputs = Vec::with_capacity(patches.len());
        for chunk in patches.chunks(256) {
            let images: Vec<ImageBuffer> = chunk
                .iter()
                .map(|p| {
                    if p.height() == size && p.width() == size {
                        p.clone()
                    } else {
                        p.resize(size, size)
                    }
                })
                .collect();
            let out = self.net.infer(&batch_tensor(&images));
            let w = self.config.out_dim();
            outputs.extend(out.data().chunks_exact(w).map(|row| self.decode(row)));
        }
        outputs
    }
}

/// Face logit BCE on positives and negatives, offset regression on positives
/// and part faces, landmark regression on positives.
fn detector_loss(out: &[f64], batch: &[&PatchSample], width: usize) -> (f64, Vec<f64>) {
    let n = batch.len();
    let mut grad = vec![0.0; out.len()];

    let cls: Vec<usize> = (0..n).filter(|&i| batch[i].class != SampleClass::Part).collect();
    let logits: Vec<f64> = cls.iter().map(|&i| out[i * width]).collect();
    let targets: Vec<f64> = cls
        .iter()
        .map(|&i| {
            if batch[i].class == SampleClass::Positive {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let (mut loss, g) = bce_with_logits(&logits, &targets);
    for (&i, gi) in cls.iter().zip(g) {
        grad[i * width] = gi;
    }

    let mut regress = |cols: std::ops::Range<usize>, weight: f64, target: &dyn Fn(&PatchSample) -> Option<Vec<f64>>| {
        let k = cols.len();
        let mut pred = vec![0.0; n * k];
        let mut tgt = vec![0.0; n * k];
        let mut mask = vec![false; n];
        for (i, s) in batch.iter().enumerate() {
            pred[i * k..(i + 1) * k].copy_from_slice(&out[i * width + cols.start..i * width + cols.end]);
            if let Some(t) = target(s) {
                tgt[i * k..(i + 1) * k].copy_from_slice(&t);
                mask[i] = true;
            }
        }
        let (l, g) = masked_mse(&pred, &tgt, k, &mask);
        for i in 0..n {
            for j in 0..k {
                grad[i * width + cols.start + j] += weight * g[i * k + j];
            }
        }
        weight * l
    };
    loss += regress(1..5, 0.5, &|s| {
        (s.class != SampleClass::Negative).then(|| s.offsets.to_vec())
    });
    if width == 15 {
        loss += regress(5..15, 0.5, &|s| {
            s.landmarks
                .filter(|_| s.class == SampleClass::Positive)
                .map(|pts| pts.iter().flat_map(|&(x, y)| [x, y]).collect())
        });
    }
    (loss, grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleClass {
    Positive,
    Part,
    Negative,
}

/// One training patch with its regression targets in patch-relative units.
#[derive(Clone, Debug)]
pub struct PatchSample {
    pub patch: ImageBuffer,
    pub class: SampleClass,
    pub offsets: [f64; 4],
    pub landmarks: Option<[(f64, f64); 5]>,
}

/// A frame with ground-truth faces (box plus five landmarks in pixels).
#[derive(Clone, Debug)]
pub struct AnnotatedFrame {
    pub image: ImageBuffer,
    pub faces: Vec<(BoundingBox, [(f64, f64); 5])>,
}

/// Draw `n` patches for `stage`, a third each of positives (IoU >= 0.65),
/// part faces (0.4 <= IoU < 0.65) and negatives (IoU < 0.3 with every face).
pub fn sample_patches(frames: &[AnnotatedFrame], stage: Stage, n: usize, rng: &mut dyn RngCore) -> Vec<PatchSample> {
    let size = stage.input_size();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < n * 200 {
        attempts += 1;
        let Some(frame) = frames.choose(rng) else { break };
        let (fh, fw) = (frame.image.height() as f64, frame.image.width() as f64);
        let want = match out.len() % 3 {
            0 => SampleClass::Positive,
            1 => SampleClass::Part,
            _ => SampleClass::Negative,
        };
        let candidate = match (want, frame.faces.choose(rng)) {
            (SampleClass::Negative, _) => {
                let side = rng.random_range(12.0..fh.min(fw).max(13.0));
                let x = rng.random_range(-0.1 * side..(fw - 0.9 * side).max(0.0) + 1e-9);
                let y = rng.random_range(-0.1 * side..(fh - 0.9 * side).max(0.0) + 1e-9);
                BoundingBox::new(x, y, x + side, y + side, 1.0)
            }
            (_, Some((gt, _))) => {
                let spread = if want == SampleClass::Positive { 0.1 } else { 0.3 };
                let side = gt.width().max(gt.height()) * rng.random_range(0.85..1.2);
                let (cx, cy) = gt.center();
                let cx = cx + rng.random_range(-spread..spread) * side;
                let cy = cy + rng.random_range(-spread..spread) * side;
                BoundingBox::new(cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0, 1.0)
            }
            (_, None) => continue,
        };
        let Ok(b) = candidate else { continue };
        let best = frame
            .faces
            .iter()
            .map(|(gt, lm)| (iou(&b, gt, OverlapMode::Union), gt, lm))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let overlap = best.map_or(0.0, |t| t.0);
        let class = if overlap >= 0.65 {
            SampleClass::Positive
        } else if overlap >= 0.4 {
            SampleClass::Part
        } else if overlap < 0.3 {
            SampleClass::Negative
        } else {
            continue;
        };
        if class != want {
            continue;
        }
        let (offsets, landmarks) = match best {
            Some((_, gt, lm)) if class != SampleClass::Negative => (
                [
                    (gt.x1() - b.x1()) / b.width(),
                    (gt.y1() - b.y1()) / b.height(),
                    (gt.x2() - b.x2()) / b.width(),
                    (gt.y2() - b.y2()) / b.height(),
                ],
                Some(lm.map(|(x, y)| ((x - b.x1()) / b.width(), (y - b.y1()) / b.height()))),
            ),
            _ => ([0.0; 4], None),
        };
        out.push(PatchSample {
            patch: box_patch(&frame.image, &b, size),
            class,
            offsets,
            landmarks,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorTrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub patches_per_stage: usize,
    pub seed: u64,
}

impl Default for DetectorTrainOptions {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            patches_per_stage: 1500,
            seed: 0,
        }
    }
}

/// Proposal, refinement and output scorers trained together.
pub struct ConvCascade {
    pub proposal: ConvScorer,
    pub refine: ConvScorer,
    pub output: ConvScorer,
}

const FILES: [&str; 3] = ["proposal.ffp", "refine.ffp", "output.ffp"];

impl ConvCascade {
    pub fn new(seed: u64) -> Self {
        let [p, r, o] = Stage::ALL.map(|s| ConvScorer::new(ConvScorerConfig::for_stage(s), seed + s.index() as u64));
        Self {
            proposal: p,
            refine: r,
            output: o,
        }
    }

    pub fn scorers(&self) -> CascadeScorers<'_> {
        CascadeScorers::new(&self.proposal, &self.refine, &self.output)
    }

    /// Train all three stages on patches cut from `frames`. Returns per-stage losses.
    pub fn train(frames: &[AnnotatedFrame], opts: &DetectorTrainOptions) -> Result<(Self, [Vec<f64>; 3]), DetectError> {
        let mut cascade = Self::new(opts.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
        let mut losses: [Vec<f64>; 3] = Default::default();
        for (k, scorer) in [&mut cascade.proposal, &mut cascade.refine, &mut cascade.output]
            .into_iter()
            .enumerate()
        {
            let samples = sample_patches(frames, scorer.stage(), opts.patches_per_stage, &mut rng);
            let stage_opts = DetectorTrainOptions {
                seed: opts.seed + 17 * k as u64,
                ..opts.clone()
            };
            losses[k] = scorer.train(&samples, &stage_opts)?;
        }
        Ok((cascade, losses))
    }

    pub fn save(&self, dir: &Path) -> Result<(), DetectError> {
        for (scorer, file) in [&self.proposal, &self.refine, &self.output].into_iter().zip(FILES) {
            scorer
                .to_archive()
                .save(&dir.join(file))
                .map_err(|e| DetectError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DetectError> {
        let load = |file: &str, stage: Stage| -> Result<ConvScorer, DetectError> {
            let archive = Archive::load(&dir.join(file)).map_err(|e| DetectError::Checkpoint(e.to_string()))?;
            let scorer = ConvScorer::from_archive(&archive)?;
            if scorer.stage() != stage {
                return Err(DetectError::Checkpoint(format!(
                    "{file} holds a {:?} scorer",
                    scorer.stage()
                )));
            }
            Ok(scorer)
        };
        Ok(Self {
            proposal: load(FILES[0], Stage::Proposal)?,
            refine: load(FILES[1], Stage::Refine)?,
            output: load(FILES[2], Stage::Output)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shapes_follow_stage() {
        for stage in Stage::ALL {
            let s = ConvScorer::new(ConvScorerConfig::for_stage(stage), 3);
            let n = stage.input_size();
            let out = s.score(&ImageBuffer::filled(n, n, 3, 100.0));
            assert!((0.0..=1.0).contains(&out.p_face));
            assert_eq!(out.landmarks.is_some(), stage.has_landmarks());
        }
    }

    #[test]
    fn archive_round_trip() {
        let s = ConvScorer::new(ConvScorerConfig::for_stage(Stage::Refine), 9);
        let back = ConvScorer::from_archive(&Archive::from_bytes(&s.to_archive().to_bytes()).unwrap()).unwrap();
        let patch = ImageBuffer::filled(24, 24, 3, 30.0);
        assert_eq!(s.score(&patch), back.score(&patch));
    }
}
