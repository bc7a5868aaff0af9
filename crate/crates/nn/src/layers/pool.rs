use rand::RngCore;

use crate::layer::Layer;
use crate::param::Param;
use crate::tensor::{Shape, Tensor};

/// Mean over the spatial plane: `[n, c, h, w] -> [n, c, 1, 1]`.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    input: Option<Shape>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Gradient of the pooling for a given input shape.
    pub fn backward_for(input: Shape, grad_out: &Tensor) -> Tensor {
        let plane = input.plane();
        let inv = 1.0 / plane as f64;
        let mut dx = Tensor::zeros(input);
        for (chunk, g) in dx.data_mut().chunks_mut(plane).zip(grad_out.data()) {
            chunk.iter_mut().for_each(|v| *v = g * inv);
        }
        dx
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, _rng: &mut dyn RngCore) -> Tensor {
        self.input = Some(x.shape());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let s = x.shape();
        let plane = s.plane();
        let data = x
            .data()
            .chunks(plane)
            .map(|c| c.iter().sum::<f64>() / plane as f64)
            .collect();
        Tensor::from_vec(self.output_shape(s), data).expect("pool shape")
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let s = self.input.take().expect("GlobalAvgPool::backward without forward");
        Self::backward_for(s, grad_out)
    }

    fn output_shape(&self, input: Shape) -> Shape {
        Shape::new(input.n, input.c, 1, 1)
    }

    fn visit_params(&self, _f: &mut dyn FnMut(&Param)) {}

    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
}
