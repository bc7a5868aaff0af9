use rand::{Rng, RngCore};

use crate::layer::Layer;
use crate::param::Param;
use crate::tensor::{Shape, Tensor};

/// Inverted dropout; identity at inference.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate, mask: None }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn forward(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Tensor {
        if self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..x.shape().len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut y = x.clone();
        y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        self.mask = Some(mask);
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let mut dx = grad_out.clone();
        if let Some(mask) = self.mask.take() {
            dx.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        dx
    }

    fn output_shape(&self, input: Shape) -> Shape {
        input
    }

    fn visit_params(&self, _f: &mut dyn FnMut(&Param)) {}

    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
}
