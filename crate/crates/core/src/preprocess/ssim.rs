use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::image::ImageBuffer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(PreprocessError::Config(format!(
                "SSIM window {} must be odd and >= 3",
                self.window
            )));
        }
        if !(self.dynamic_range > 0.0 && self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(PreprocessError::Config("SSIM constants must be positive".into()));
        }
        Ok(())
    }
}

fn luma_255(img: &ImageBuffer) -> Vec<f64> {
    let k = if img.is_normalized() { 255.0 } else { 1.0 };
    img.luma().into_iter().map(|v| v * k).collect()
}

/// Sums of `v` over a `(2r + 1)` window along each row, truncated at the edges.
fn row_sums(v: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &v[y * w..(y + 1) * w];
        for x in 0..w {
            out[y * w + x] = row[x.saturating_sub(r)..(x + r + 1).min(w)].iter().sum();
        }
    }
    out
}

fn col_sums(v: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
            for x in 0..w {
                out[y * w + x] += v[yy * w + x];
            }
        }
    }
    out
}

fn box_sums(v: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    col_sums(&row_sums(v, h, w, r), h, w, r)
}

/// Per-pixel SSIM in `[-1, 1]` on the luma of `a` and `b`. Windows are
/// truncated at the image border and use population statistics.
pub fn ssim_values(a: &ImageBuffer, b: &ImageBuffer, params: &SsimParams) -> Result<Vec<f64>, PreprocessError> {
    params.validate()?;
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(PreprocessError::DimensionMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    let (h, w) = (a.height(), a.width());
    let r = params.window / 2;
    let la = luma_255(a);
    let lb = luma_255(b);
    let aa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();
    let [sa, sb, saa, sbb, sab] = [&la, &lb, &aa, &bb, &ab].map(|v| box_sums(v, h, w, r));
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let ny = ((y + r + 1).min(h) - y.saturating_sub(r)) as f64;
        for x in 0..w {
            let n = ny * ((x + r + 1).min(w) - x.saturating_sub(r)) as f64;
            let i = y * w + x;
            let (ma, mb) = (sa[i] / n, sb[i] / n);
            let va = saa[i] / n - ma * ma;
            let vb = sbb[i] / n - mb * mb;
            let cov = sab[i] / n - ma * mb;
            let s = ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            out.push(s.clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Difference mask `255 (1 - ssim) / 2` as a single-channel image; brighter is more different.
pub fn ssim_map(a: &ImageBuffer, b: &ImageBuffer, params: &SsimParams) -> Result<ImageBuffer, PreprocessError> {
    let s = ssim_values(a, b, params)?;
    let data = s.iter().map(|v| (255.0 * (1.0 - v) / 2.0) as f32).collect();
    Ok(ImageBuffer::from_clamped(a.height(), a.width(), 1, data, false))
}

pub fn mean_ssim(a: &ImageBuffer, b: &ImageBuffer, params: &SsimParams) -> Result<f64, PreprocessError> {
    let s = ssim_values(a, b, params)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}
