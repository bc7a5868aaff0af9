use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Persistent state (e.g. running statistics) that is checkpointed but not trained.
    Buffer,
}

/// A named tensor of model state with a lazily allocated gradient.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub value: Vec<f64>,
    grad: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>, kind: ParamKind) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            value.len(),
            "param shape/value mismatch"
        );
        Self {
            name: name.into(),
            shape,
            kind,
            value,
            grad: Vec::new(),
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>, kind: ParamKind) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n], kind)
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: f64, kind: ParamKind) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![v; n], kind)
    }

    /// Zero-mean normal initialisation with the given standard deviation.
    pub fn normal(name: impl Into<String>, shape: Vec<usize>, std: f64, rng: &mut dyn RngCore) -> Self {
        let n: usize = shape.iter().product();
        let value = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect();
        Self::new(name, shape, value, ParamKind::Trainable)
    }

    pub fn uniform(name: impl Into<String>, shape: Vec<usize>, bound: f64, rng: &mut dyn RngCore) -> Self {
        let n: usize = shape.iter().product();
        let value = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(name, shape, value, ParamKind::Trainable)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == ParamKind::Trainable
    }

    /// Gradient buffer; zeros if no backward pass has touched this parameter.
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        &mut self.grad
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        let dst = self.grad_mut();
        assert_eq!(dst.len(), g.len(), "gradient length mismatch");
        for (d, s) in dst.iter_mut().zip(g) {
            *d += s;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}
