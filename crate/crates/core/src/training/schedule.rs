/// `base_lr (1 - step / total_steps)^power`, zero from `total_steps` on.
pub fn poly_lr(step: usize, base_lr: f64, total_steps: usize, power: f64) -> f64 {
    if step >= total_steps {
        return 0.0;
    }
    base_lr * (1.0 - step as f64 / total_steps as f64).powf(power)
}

/// `y (1 - eps) + eps / 2`.
pub fn smooth_labels(y: u8, eps: f64) -> f64 {
    y as f64 * (1.0 - eps) + eps / 2.0
}
