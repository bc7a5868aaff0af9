//! Procedural stand-in dataset: frame-directory videos of a drawn face on a
//! cool-toned background. Fake videos copy a real video and re-render an
//! inner patch of the face (blurred, tinted, with a bright blending seam).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use facefake_nn::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::AnnotatedFrame;
use crate::image::{ImageBuffer, ImageError};
use crate::preprocess::{frame_file_name, VideoMeta, VideoMetadata, VideoRecord, METADATA_FILE, META_FILE};
use crate::types::{BoundingBox, Label};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_videos: usize,
    /// Share of FAKE videos, rounded to the nearest count.
    pub fake_fraction: f64,
    pub frames_per_video: usize,
    pub width: usize,
    pub height: usize,
    pub folders: u32,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos: 60,
            fake_fraction: 0.5,
            frames_per_video: 24,
            width: 160,
            height: 120,
            folders: 10,
            fps: 30.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_fake(&self) -> usize {
        ((self.n_videos as f64 * self.fake_fraction).round() as usize).min(self.n_videos)
    }

    pub fn n_real(&self) -> usize {
        self.n_videos - self.n_fake()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_videos == 0 || self.frames_per_video == 0 || self.folders == 0 {
            return Err("n_videos, frames_per_video and folders must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return Err("fake_fraction must lie in [0, 1]".into());
        }
        if self.n_fake() > 0 && self.n_real() == 0 {
            return Err("fake videos need at least one real video to derive from".into());
        }
        if self.width < 64 || self.height < 64 {
            return Err("frames must be at least 64x64".into());
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return Err("fps must be positive".into());
        }
        Ok(())
    }
}

pub fn video_id(index: usize) -> String {
    format!("v{index:04}")
}

/// Face geometry of one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceShape {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl FaceShape {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(
            self.cx - self.rx,
            self.cy - self.ry,
            self.cx + self.rx,
            self.cy + self.ry,
            1.0,
        )
        .expect("face box is well formed")
    }

    /// Left eye, right eye, nose, left and right mouth corner.
    pub fn landmarks(&self) -> [(f64, f64); 5] {
        let (cx, cy, rx, ry) = (self.cx, self.cy, self.rx, self.ry);
        [
            (cx - 0.35 * rx, cy - 0.2 * ry),
            (cx + 0.35 * rx, cy - 0.2 * ry),
            (cx, cy + 0.08 * ry),
            (cx - 0.35 * rx, cy + 0.45 * ry),
            (cx + 0.35 * rx, cy + 0.45 * ry),
        ]
    }

    fn rho(&self, x: f64, y: f64) -> f64 {
        ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2)
    }
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub id: String,
    pub label: Label,
    pub original: Option<String>,
    pub folder: u32,
    pub frames: Vec<ImageBuffer>,
    pub faces: Vec<FaceShape>,
}

impl SynthVideo {
    pub fn annotated(&self) -> Vec<AnnotatedFrame> {
        self.frames
            .iter()
            .zip(&self.faces)
            .map(|(img, f)| AnnotatedFrame {
                image: img.clone(),
                faces: vec![(f.bbox(), f.landmarks())],
            })
            .collect()
    }
}

struct Scene {
    background: [f64; 3],
    gradient: f64,
    skin: [f64; 3],
    face0: FaceShape,
    drift: (f64, f64, f64),
}

fn scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Scene {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let g: f64 = rng.random_range(70.0..190.0);
    let b: f64 = rng.random_range(70.0..190.0);
    let r = (g.min(b) - 10.0 - rng.random_range(0.0..40.0)).max(0.0);
    let sr = rng.random_range(190.0..230.0_f64).round();
    let sg = sr - rng.random_range(45.0..70.0_f64).round();
    let sb = sg - rng.random_range(20.0..40.0_f64).round();
    let rx = rng.random_range(0.15..0.2) * h.min(w);
    let ry = 1.25 * rx;
    let margin = 6.0;
    let cx = rng.random_range(rx + margin..w - rx - margin);
    let cy = rng.random_range(ry + margin..h - ry - margin);
    Scene {
        background: [r, g, b],
        gradient: rng.random_range(-12.0..12.0),
        skin: [sr, sg, sb],
        face0: FaceShape { cx, cy, rx, ry },
        drift: (
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.5..2.5),
            rng.random_range(0.5..2.0),
        ),
    }
}

fn face_at(s: &Scene, t: usize, n: usize) -> FaceShape {
    let a = s.drift.0 + std::f64::consts::TAU * t as f64 / n.max(1) as f64;
    FaceShape {
        cx: s.face0.cx + s.drift.1 * a.sin(),
        cy: s.face0.cy + s.drift.2 * a.cos(),
        ..s.face0
    }
}

/// Face colour at `(x, y)`, or `None` outside the face ellipse.
fn feature_color(f: &FaceShape, skin: [f64; 3], x: f64, y: f64) -> Option<[f64; 3]> {
    if f.rho(x, y) > 1.0 {
        return None;
    }
    let lm = f.landmarks();
    let eye_r = (0.13 * f.rx).max(2.0);
    for &(ex, ey) in &lm[..2] {
        if (x - ex).powi(2) + (y - ey).powi(2) <= eye_r * eye_r {
            return Some([50.0, 40.0, 40.0]);
        }
    }
    let (mx, my) = ((lm[3].0 + lm[4].0) / 2.0, lm[3].1);
    let (mw, mh) = ((lm[4].0 - lm[3].0) / 2.0, (0.08 * f.ry).max(1.5));
    if ((x - mx) / mw).powi(2) + ((y - my) / mh).powi(2) <= 1.0 {
        return Some([90.0, 30.0, 40.0]);
    }
    let shade = -10.0 * (y - f.cy) / f.ry;
    let nose = {
        let (nx, ny) = lm[2];
        ((x - nx) / (0.1 * f.rx)).powi(2) + ((y - ny) / (0.2 * f.ry)).powi(2) <= 1.0
    };
    let d = shade + if nose { -15.0 } else { 0.0 };
    Some(skin.map(|c| c + d))
}

fn render(cfg: &SynthConfig, s: &Scene, face: &FaceShape, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (w, h) = (cfg.width, cfg.height);
    let mut px = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let noise = rng.random_range(-4i32..=4) as f64;
            let c = feature_color(face, s.skin, fx, fy).unwrap_or_else(|| {
                let d = s.gradient * (fy / h as f64 - 0.5);
                s.background.map(|c| c + d)
            });
            for k in 0..3 {
                px[(y * w + x) * 3 + k] = c[k] + noise;
            }
        }
    }
    px
}

struct Artifact {
    scale: f64,
    tint: [f64; 3],
    seam: f64,
}

fn artifact(rng: &mut ChaCha8Rng) -> Artifact {
    Artifact {
        scale: rng.random_range(0.65..0.8),
        tint: [
            rng.random_range(-6.0..-2.0),
            rng.random_range(2.0..6.0),
            rng.random_range(2.0..8.0),
        ],
        seam: rng.random_range(35.0..50.0),
    }
}

/// Re-render the inner ellipse of `face`: 5x5 box blur plus tint, and brighten
/// a thin ring at its boundary.
fn manipulate(cfg: &SynthConfig, px: &[f64], face: &FaceShape, a: &Artifact) -> Vec<f64> {
    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let inner = FaceShape {
        rx: face.rx * a.scale,
        ry: face.ry * a.scale,
        ..*face
    };
    let seam_width = 1.2 / inner.rx.min(inner.ry);
    let mut out = px.to_vec();
    for y in 0..h {
        for x in 0..w {
            let rho = inner.rho(x as f64 + 0.5, y as f64 + 0.5).sqrt();
            let i = ((y * w + x) * 3) as usize;
            if rho < 1.0 - seam_width {
                for k in 0..3 {
                    let mut sum = 0.0;
                    let mut n = 0.0;
                    for dy in -2..=2 {
                        for dx in -2..=2 {
                            let (yy, xx) = (y + dy, x + dx);
                            if (0..h).contains(&yy) && (0..w).contains(&xx) {
                                sum += px[((yy * w + xx) * 3) as usize + k];
                                n += 1.0;
                            }
                        }
                    }
                    out[i + k] = sum / n + a.tint[k];
                }
            } else if rho <= 1.0 + seam_width {
                for k in 0..3 {
                    out[i + k] = px[i + k] + a.seam;
                }
            }
        }
    }
    out
}

fn to_image(cfg: &SynthConfig, px: Vec<f64>) -> ImageBuffer {
    let data = px.into_iter().map(|v| v.round().clamp(0.0, 255.0) as f32).collect();
    ImageBuffer::new(cfg.height, cfg.width, 3, data, false).expect("rendered frame is valid")
}

fn real_rng(cfg: &SynthConfig, real_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (real_index as u64) << 1)
}

fn render_real(cfg: &SynthConfig, real_index: usize) -> (Vec<Vec<f64>>, Vec<FaceShape>) {
    let mut rng = real_rng(cfg, real_index);
    let s = scene(cfg, &mut rng);
    let n = cfg.frames_per_video;
    let faces: Vec<FaceShape> = (0..n).map(|t| face_at(&s, t, n)).collect();
    let frames = faces.iter().map(|f| render(cfg, &s, f, &mut rng)).collect();
    (frames, faces)
}

/// Video `index` of the dataset: reals occupy the first `n_real` ids, fake
/// `j` derives from real `j mod n_real` and shares its folder.
pub fn generate_video(cfg: &SynthConfig, index: usize) -> SynthVideo {
    let n_real = cfg.n_real();
    if index < n_real {
        let (frames, faces) = render_real(cfg, index);
        SynthVideo {
            id: video_id(index),
            label: Label::Real,
            original: None,
            folder: index as u32 % cfg.folders,
            frames: frames.into_iter().map(|p| to_image(cfg, p)).collect(),
            faces,
        }
    } else {
        let j = index - n_real;
        let src = j % n_real;
        let (frames, faces) = render_real(cfg, src);
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ ((index as u64) << 1 | 1));
        let a = artifact(&mut rng);
        SynthVideo {
            id: video_id(index),
            label: Label::Fake,
            original: Some(video_id(src)),
            folder: src as u32 % cfg.folders,
            frames: frames
                .iter()
                .zip(&faces)
                .map(|(p, f)| to_image(cfg, manipulate(cfg, p, f, &a)))
                .collect(),
            faces,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn write_text(path: &Path, text: &str) -> Result<(), SynthError> {
    std::fs::write(path, text).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write every video as `out/<id>/%06d.png` plus `meta.json`, and the
/// dataset-level `metadata.json` and `labels.csv` (`filename,label` with
/// 1 for FAKE).
pub fn write_dataset(cfg: &SynthConfig, out: &Path) -> Result<VideoMetadata, SynthError> {
    cfg.validate().map_err(SynthError::Config)?;
    let written: Vec<Result<(String, VideoRecord), SynthError>> = par::map(cfg.n_videos, |i| {
        let v = generate_video(cfg, i);
        let dir = out.join(&v.id);
        for (t, frame) in v.frames.iter().enumerate() {
            frame.save_png(&dir.join(frame_file_name(t)))?;
        }
        let meta = VideoMeta {
            fps: cfg.fps,
            frame_count: v.frames.len(),
        };
        write_text(
            &dir.join(META_FILE),
            &serde_json::to_string(&meta).expect("meta serializes"),
        )?;
        Ok((
            v.id,
            VideoRecord {
                label: v.label,
                original: v.original,
                folder: Some(v.folder),
            },
        ))
    });
    let metadata: BTreeMap<String, VideoRecord> = written.into_iter().collect::<Result<_, _>>()?;
    let mut json = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    json.push('\n');
    write_text(&out.join(METADATA_FILE), &json)?;
    let mut csv = String::from("filename,label\n");
    for (id, rec) in &metadata {
        let _ = writeln!(csv, "{id},{}", u8::from(rec.label == Label::Fake));
    }
    write_text(&out.join(LABELS_FILE), &csv)?;
    Ok(metadata)
}

/// Annotated frames for detector training: every `stride`-th frame of the
/// first `n_videos` videos.
pub fn annotated_frames(cfg: &SynthConfig, n_videos: usize, stride: usize) -> Vec<AnnotatedFrame> {
    par::map(n_videos.min(cfg.n_videos), |i| generate_video(cfg, i))
        .into_iter()
        .flat_map(|v| v.annotated().into_iter().step_by(stride.max(1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_videos: 4,
            frames_per_video: 3,
            seed: 7,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn colours_respect_the_skin_rule() {
        let cfg = small();
        for i in 0..cfg.n_videos {
            let v = generate_video(&cfg, i);
            let img = &v.frames[0];
            let f = v.faces[0];
            let (cx, cy) = (f.cx as usize, (f.cy + 0.25 * f.ry) as usize);
            let p = img.pixel(cy, cx);
            assert!(p[0] > 100.0 && p[0] > p[1].max(p[2]) + 25.0, "{p:?}");
            let q = img.pixel(1, 1);
            assert!(q[0] <= q[1].min(q[2]), "{q:?}");
        }
    }

    #[test]
    fn fakes_pair_with_reals() {
        let cfg = small();
        assert_eq!((cfg.n_real(), cfg.n_fake()), (2, 2));
        let real = generate_video(&cfg, 0);
        let fake = generate_video(&cfg, 2);
        assert_eq!(fake.original.as_deref(), Some("v0000"));
        assert_eq!(fake.folder, real.folder);
        assert_eq!(fake.faces, real.faces);
        assert_ne!(fake.frames[0], real.frames[0]);
        assert_eq!(fake.frames[0].pixel(0, 0), real.frames[0].pixel(0, 0));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small();
        assert_eq!(generate_video(&cfg, 3).frames, generate_video(&cfg, 3).frames);
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(generate_video(&cfg, 0).frames, generate_video(&other, 0).frames);
    }
}
