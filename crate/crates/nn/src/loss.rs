//! Loss functions returning the mean loss and its gradient with respect to the inputs.

use crate::layers::sigmoid;

/// Mean binary cross-entropy on raw logits against (possibly soft) targets.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), targets.len(), "bce length mismatch");
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(targets) {
        // max(z, 0) - z t + ln(1 + e^-|z|)
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / n);
    }
    (loss / n, grad)
}

/// Mean over *selected rows* of the squared error summed across each row.
///
/// `pred` and `target` are `rows x width`; rows with `mask[r] == false`
/// contribute neither loss nor gradient.
pub fn masked_mse(pred: &[f64], target: &[f64], width: usize, mask: &[bool]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    assert_eq!(pred.len(), width * mask.len());
    let active = mask.iter().filter(|m| **m).count();
    let mut grad = vec![0.0; pred.len()];
    if active == 0 {
        return (0.0, grad);
    }
    let n = active as f64;
    let mut loss = 0.0;
    for (r, &on) in mask.iter().enumerate() {
        if !on {
            continue;
        }
        for j in r * width..(r + 1) * width {
            let d = pred[j] - target[j];
            loss += d * d;
            grad[j] = 2.0 * d / n;
        }
    }
    (loss / n, grad)
}
