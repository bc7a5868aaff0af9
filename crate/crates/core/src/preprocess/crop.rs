use super::PreprocessError;
use crate::image::ImageBuffer;
use crate::types::{BoundingBox, FaceCrop, Label, PixelRect};

/// Slack for floating-point noise when rounding outward.
const ROUND_EPS: f64 = 1e-9;

/// Grow `b` by `margin / 2` of its width and height on every side, clip to the
/// frame and round outward to whole pixels.
pub fn margin_rect(width: usize, height: usize, b: &BoundingBox, margin: f64) -> Result<PixelRect, PreprocessError> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(PreprocessError::Config(format!(
            "margin {margin} must be a finite value >= 0"
        )));
    }
    if b.clipped(width, height).is_none() {
        return Err(PreprocessError::BoxOutsideFrame(b.coords()));
    }
    let mx = b.width() * margin / 2.0;
    let my = b.height() * margin / 2.0;
    let x0 = (b.x1() - mx).max(0.0);
    let y0 = (b.y1() - my).max(0.0);
    let x1 = (b.x2() + mx).min(width as f64);
    let y1 = (b.y2() + my).min(height as f64);
    let rect = PixelRect {
        x0: (x0 + ROUND_EPS).floor() as i64,
        y0: (y0 + ROUND_EPS).floor() as i64,
        x1: (x1 - ROUND_EPS).ceil() as i64,
        y1: (y1 - ROUND_EPS).ceil() as i64,
    };
    if rect.x1 <= rect.x0 || rect.y1 <= rect.y0 {
        return Err(PreprocessError::BoxOutsideFrame(b.coords()));
    }
    Ok(rect)
}

/// Cut a margin-expanded face out of `frame` at source resolution.
pub fn crop_with_margin(
    frame: &ImageBuffer,
    b: &BoundingBox,
    margin: f64,
    video_id: &str,
    frame_index: usize,
    label: Label,
) -> Result<FaceCrop, PreprocessError> {
    let rect = margin_rect(frame.width(), frame.height(), b, margin)?;
    Ok(FaceCrop {
        image: frame.crop(rect.x0, rect.y0, rect.x1, rect.y1),
        video_id: video_id.to_string(),
        frame_index,
        source_box: *b,
        margin_fraction: margin,
        label,
        rect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2, 1.0).unwrap()
    }

    #[test]
    fn examples() {
        let r = margin_rect(200, 200, &bx(50.0, 50.0, 150.0, 150.0), 0.30).unwrap();
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (35, 35, 165, 165));
        let r = margin_rect(200, 200, &bx(0.0, 0.0, 100.0, 100.0), 0.30).unwrap();
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (0, 0, 115, 115));
        let r = margin_rect(200, 200, &bx(10.2, 20.7, 30.5, 40.0), 0.0).unwrap();
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (10, 20, 31, 40));
        assert!(margin_rect(200, 200, &bx(300.0, 0.0, 310.0, 10.0), 0.3).is_err());
    }

    #[test]
    fn crop_keeps_provenance() {
        let frame = ImageBuffer::filled(100, 120, 3, 9.0);
        let c = crop_with_margin(&frame, &bx(90.0, 10.0, 130.0, 50.0), 0.3, "v1", 4, Label::Fake).unwrap();
        assert_eq!((c.image.width(), c.image.height()), (c.rect.width(), c.rect.height()));
        assert_eq!(c.rect.x1, 120);
        assert_eq!(c.margin_fraction, 0.3);
        assert_eq!(c.frame_index, 4);
    }
}
