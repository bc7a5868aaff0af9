use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::types::{BoundingBox, GeometryError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OverlapMode {
    /// Intersection over union.
    Union,
    /// Intersection over the smaller area.
    Min,
}

pub fn iou(a: &BoundingBox, b: &BoundingBox, mode: OverlapMode) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    let denom = match mode {
        OverlapMode::Union => a.area() + b.area() - inter,
        OverlapMode::Min => a.area().min(b.area()),
    };
    (inter / denom).clamp(0.0, 1.0)
}

/// Candidate order for suppression: descending confidence, ties by input position.
pub fn confidence_order(boxes: &[BoundingBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .confidence()
            .partial_cmp(&boxes[i].confidence())
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy suppression; returns the kept indices in descending-confidence order.
pub fn nms_indices(boxes: &[BoundingBox], threshold: f64, mode: OverlapMode) -> Vec<usize> {
    let order = confidence_order(boxes);
    let mut suppressed = vec![false; boxes.len()];
    let mut keep = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[rank + 1..] {
            if !suppressed[j] && iou(&boxes[i], &boxes[j], mode) > threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

pub fn nms(boxes: &[BoundingBox], threshold: f64, mode: OverlapMode) -> Vec<BoundingBox> {
    nms_indices(boxes, threshold, mode)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// Shift each edge by an offset expressed as a fraction of the box extent.
pub fn apply_box_regression(b: &BoundingBox, offsets: [f64; 4]) -> Result<BoundingBox, GeometryError> {
    let w = b.width();
    let h = b.height();
    BoundingBox::new(
        b.x1() + offsets[0] * w,
        b.y1() + offsets[1] * h,
        b.x2() + offsets[2] * w,
        b.y2() + offsets[3] * h,
        b.confidence(),
    )
}

/// Grow the shorter side so the box is square about the same centre.
pub fn square_pad(b: &BoundingBox) -> BoundingBox {
    let side = b.width().max(b.height());
    let (cx, cy) = b.center();
    BoundingBox::new(
        cx - side / 2.0,
        cy - side / 2.0,
        cx + side / 2.0,
        cy + side / 2.0,
        b.confidence(),
    )
    .expect("square of a valid box is valid")
}
