//! Dense row-major image buffers with bilinear resampling and PNG I/O.

use std::path::Path;

use facefake_nn::{Shape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: ::image::ImageError,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: ::image::ImageError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An `height x width x channels` interleaved image.
///
/// Intensities are either raw `[0, 255]` or normalised `[0, 1]`, as recorded
/// by the `normalized` flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    normalized: bool,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::Invalid(format!("empty extent {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(ImageError::Invalid(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        let max = if normalized { 1.0 } else { 255.0 };
        if let Some(v) = data.iter().find(|v| !(0.0..=max).contains(*v)) {
            return Err(ImageError::Invalid(format!("intensity {v} outside [0, {max}]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            normalized,
            data,
        })
    }

    /// Construct without range checks; values are clamped into range instead.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f32>, normalized: bool) -> Self {
        assert_eq!(data.len(), height * width * channels);
        assert!(height > 0 && width > 0 && (channels == 1 || channels == 3));
        let max = if normalized { 1.0 } else { 255.0 };
        data.iter_mut()
            .for_each(|v| *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, max) });
        Self {
            height,
            width,
            channels,
            normalized,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self::from_clamped(height, width, channels, vec![value; height * width * channels], false)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let max = if self.normalized { 1.0 } else { 255.0 };
        self.data[(y * self.width + x) * self.channels + c] = v.clamp(0.0, max);
    }

    pub fn normalize(&self) -> Self {
        if self.normalized {
            return self.clone();
        }
        self.rescaled(1.0 / 255.0, true)
    }

    pub fn denormalize(&self) -> Self {
        if !self.normalized {
            return self.clone();
        }
        self.rescaled(255.0, false)
    }

    fn rescaled(&self, k: f32, normalized: bool) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            normalized,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// ITU-R BT.601 luma, as `f64` for numerical work.
    pub fn luma(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.iter().map(|&v| v as f64).collect();
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    pub fn to_gray(&self) -> Self {
        let data = self.luma().into_iter().map(|v| v as f32).collect();
        Self::from_clamped(self.height, self.width, 1, data, self.normalized)
    }

    /// Bilinear resampling with half-pixel centres.
    pub fn resize(&self, height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "resize to empty extent");
        if height == self.height && width == self.width {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let c = self.channels;
        let mut data = vec![0.0f32; height * width * c];
        let xs: Vec<(usize, usize, f32)> = (0..width).map(|x| axis_sample(x, sx, self.width)).collect();
        for y in 0..height {
            let (y0, y1, fy) = axis_sample(y, sy, self.height);
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                for ch in 0..c {
                    let a = self.get(y0, x0, ch);
                    let b = self.get(y0, x1, ch);
                    let d = self.get(y1, x0, ch);
                    let e = self.get(y1, x1, ch);
                    let top = a + (b - a) * fx;
                    let bot = d + (e - d) * fx;
                    data[(y * width + x) * c + ch] = top + (bot - top) * fy;
                }
            }
        }
        Self {
            height,
            width,
            channels: c,
            normalized: self.normalized,
            data,
        }
    }

    /// Copy the integer rectangle `[x0, x1) x [y0, y1)`; pixels outside the
    /// image are zero.
    pub fn crop(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        assert!(x1 > x0 && y1 > y0, "crop to empty rectangle");
        let w = (x1 - x0) as usize;
        let h = (y1 - y0) as usize;
        let c = self.channels;
        let mut data = vec![0.0f32; w * h * c];
        for yy in 0..h {
            let sy = y0 + yy as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            let lo = x0.max(0);
            let hi = x1.min(self.width as i64);
            if hi <= lo {
                continue;
            }
            let src = ((sy as usize) * self.width + lo as usize) * c;
            let dst = (yy * w + (lo - x0) as usize) * c;
            let len = (hi - lo) as usize * c;
            data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
        }
        Self {
            height: h,
            width: w,
            channels: c,
            normalized: self.normalized,
            data,
        }
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        let c = self.channels;
        for y in 0..self.height {
            for x in 0..self.width {
                for ch in 0..c {
                    out.data[(y * self.width + x) * c + ch] = self.get(y, self.width - 1 - x, ch);
                }
            }
        }
        out
    }

    /// Planar `c x h x w` copy with intensities mapped to `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f64> {
        let k = if self.normalized { 1.0 } else { 1.0 / 255.0 };
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v as f64 * k;
            }
        }
        out
    }

    /// 8-bit quantisation of the raw intensities.
    pub fn to_u8(&self) -> Vec<u8> {
        let scale = if self.normalized { 255.0 } else { 1.0 };
        self.data
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::new(
            height,
            width,
            channels,
            bytes.iter().map(|&b| b as f32).collect(),
            false,
        )
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = ::image::open(path).map_err(|source| ImageError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_u8(h as usize, w as usize, 3, rgb.as_raw())
    }

    /// Write as 8-bit PNG (RGB for 3 channels, grayscale for 1).
    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| ImageError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        let color = if self.channels == 3 {
            ::image::ExtendedColorType::Rgb8
        } else {
            ::image::ExtendedColorType::L8
        };
        ::image::save_buffer_with_format(
            path,
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            color,
            ::image::ImageFormat::Png,
        )
        .map_err(|source| ImageError::Write {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Stack equally sized images into an NCHW tensor with values in `[0, 1]`.
pub fn batch_tensor(images: &[ImageBuffer]) -> Tensor {
    assert!(!images.is_empty(), "empty image batch");
    let (h, w, c) = (images[0].height, images[0].width, images[0].channels);
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        assert!(
            img.height == h && img.width == w && img.channels == c,
            "batch images must share dimensions"
        );
        data.extend(img.to_chw());
    }
    Tensor::from_vec(Shape::new(images.len(), c, h, w), data).expect("length matches shape")
}

fn axis_sample(dst: usize, scale: f64, len: usize) -> (usize, usize, f32) {
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, (src - i0 as f64) as f32)
}
