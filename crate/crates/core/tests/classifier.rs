use facefake_core::classifier::{
    build_named, build_variant, compound_multipliers, BackboneConfig, EfficientNet, ScalingConfig, VariantSpec,
};
use facefake_nn::loss::bce_with_logits;
use facefake_nn::{Layer, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trainable parameter count and top-level output shapes, derived from the
/// plan alone: "same" padding, BN with scale and shift, SE convs with bias.
fn walk(cfg: &BackboneConfig, batch: usize) -> (usize, Vec<Shape>) {
    let out = |size: usize, k: usize, s: usize| (size + 2 * (k / 2) - k) / s + 1;
    let mut params = 0;
    let mut shapes = Vec::new();
    let mut hw = out(cfg.input_resolution, 3, 2);
    params += 3 * cfg.stem_channels * 9 + 2 * cfg.stem_channels;
    shapes.push(Shape::new(batch, cfg.stem_channels, hw, hw));
    let mut c = cfg.stem_channels;
    for st in &cfg.stages {
        for r in 0..st.repeats {
            let stride = if r == 0 { st.stride } else { 1 };
            let mid = c * st.expansion;
            if st.expansion != 1 {
                params += c * mid + 2 * mid;
            }
            params += mid * st.kernel * st.kernel + 2 * mid;
            let sq = ((c as f64 * st.se_ratio) as usize).max(1);
            params += mid * sq + sq + sq * mid + mid;
            params += mid * st.channels_out + 2 * st.channels_out;
            hw = out(hw, st.kernel, stride);
            c = st.channels_out;
            shapes.push(Shape::new(batch, c, hw, hw));
        }
    }
    params += c * cfg.head_channels + 2 * cfg.head_channels;
    shapes.push(Shape::new(batch, cfg.head_channels, hw, hw));
    shapes.push(Shape::new(batch, cfg.head_channels, 1, 1));
    shapes.push(Shape::new(batch, cfg.head_channels, 1, 1));
    params += cfg.head_channels + 1;
    shapes.push(Shape::new(batch, 1, 1, 1));
    (params, shapes)
}

#[test]
fn built_models_match_the_analytic_walker() {
    for name in ["B0", "B1", "B2", "B3", "B4", "B5"] {
        for budget in [0.1, 0.25, 0.5] {
            let cfg = build_named(name, budget).unwrap();
            let model = EfficientNet::new(cfg.clone(), 0).unwrap();
            let (params, shapes) = walk(&cfg, 2);
            assert_eq!(model.param_count(), params, "{name} @ {budget}");
            assert_eq!(model.layer_shapes(2), shapes, "{name} @ {budget}");
        }
    }
}

fn small_model() -> EfficientNet {
    let mut cfg = build_named("B0", 0.1).unwrap().with_resolution(32);
    cfg.dropout = 0.0;
    cfg.drop_connect_rate = 0.0;
    EfficientNet::new(cfg, 4).unwrap()
}

fn batch(seed: u64, n: usize, r: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3 * r * r).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::from_vec(Shape::new(n, 3, r, r), data).unwrap()
}

fn train_loss(model: &mut EfficientNet, x: &Tensor, y: &[f64]) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let logits = model.forward_train(x, &mut rng).unwrap();
    bce_with_logits(&logits, y)
}

fn nudge(model: &mut EfficientNet, target: (usize, usize), delta: f64) {
    let mut k = 0;
    model.visit_params_mut(&mut |p| {
        if p.is_trainable() {
            if k == target.0 {
                p.value[target.1] += delta;
            }
            k += 1;
        }
    });
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut model = small_model();
    let x = batch(1, 4, 32);
    let y = [0.0, 1.0, 1.0, 0.0];
    model.zero_grad();
    let (_, g) = train_loss(&mut model, &x, &y);
    model.backward_logits(&g);
    let mut grads: Vec<Vec<f64>> = Vec::new();
    model.visit_params(&mut |p| {
        if p.is_trainable() {
            grads.push(p.grad().to_vec());
        }
    });

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let pi = rng.random_range(0..grads.len());
        let ei = rng.random_range(0..grads[pi].len());
        nudge(&mut model, (pi, ei), h);
        let up = train_loss(&mut model, &x, &y).0;
        nudge(&mut model, (pi, ei), -2.0 * h);
        let down = train_loss(&mut model, &x, &y).0;
        nudge(&mut model, (pi, ei), h);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[pi][ei];
        // Shifts absorbed by a later batch norm have an exact zero gradient; the
        // floor keeps round-off in the difference quotient from dominating there.
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(rel);
        assert!(rel <= 1e-3, "param {pi}[{ei}]: analytic {analytic}, numeric {numeric}");
    }
    eprintln!("worst relative error {worst:.2e}");
}

#[test]
fn evaluation_is_deterministic() {
    let model = small_model();
    let x = batch(2, 3, 32);
    assert_eq!(model.logits(&x).unwrap(), model.logits(&x).unwrap());
    let p = model.predict(&x).unwrap();
    assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn compound_scaling_properties() {
    let m = compound_multipliers(&ScalingConfig::with_phi(0.0));
    assert_eq!((m.depth, m.width, m.resolution), (1.0, 1.0, 1.0));
    assert!(ScalingConfig::with_phi(1.0).constraint_warning().is_none());
    let off = ScalingConfig {
        alpha: 1.5,
        ..ScalingConfig::with_phi(1.0)
    };
    assert!(off.constraint_warning().is_some());
    let mut last = 0;
    for phi in [0.0, 0.5, 1.0, 2.0] {
        let cfg = build_variant(&VariantSpec::Custom(ScalingConfig::with_phi(phi)), 1.0).unwrap();
        let n = EfficientNet::new(cfg, 0).unwrap().param_count();
        assert!(n >= last, "phi {phi}: {n} < {last}");
        last = n;
    }
}
