use crate::layer::Layer;

/// Stochastic gradient descent with heavy-ball momentum:
/// `v <- momentum * v + g; theta <- theta - lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Self {
        assert!((0.0..1.0).contains(&momentum), "momentum must be in [0, 1)");
        Self {
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Applies one update to every trainable parameter of `model` and clears its gradients.
    pub fn step(&mut self, model: &mut dyn Layer, lr: f64) {
        let mut idx = 0;
        let momentum = self.momentum;
        let velocity = &mut self.velocity;
        model.visit_params_mut(&mut |p| {
            if !p.is_trainable() {
                return;
            }
            if velocity.len() <= idx {
                velocity.push(vec![0.0; p.len()]);
            }
            let v = &mut velocity[idx];
            let g = p.grad_mut().to_vec();
            for ((theta, vi), gi) in p.value.iter_mut().zip(v.iter_mut()).zip(&g) {
                *vi = momentum * *vi + gi;
                *theta -= lr * *vi;
            }
            p.zero_grad();
            idx += 1;
        });
    }
}
