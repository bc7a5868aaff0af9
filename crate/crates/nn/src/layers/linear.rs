use rand::RngCore;

use crate::gemm::{gemm, Mat};
use crate::layer::Layer;
use crate::param::{Param, ParamKind};
use crate::tensor::{Shape, Tensor};

/// Fully connected layer over the flattened `c * h * w` features of each sample.
/// Output shape is `[n, out, 1, 1]`.
#[derive(Clone, Debug)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    weight: Param,
    bias: Param,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut dyn RngCore) -> Self {
        let bound = 1.0 / (in_features.max(1) as f64).sqrt();
        Self {
            in_features,
            out_features,
            weight: Param::uniform(format!("{name}.weight"), vec![out_features, in_features], bound, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![out_features], ParamKind::Trainable),
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, _rng: &mut dyn RngCore) -> Tensor {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let s = x.shape();
        assert_eq!(s.sample_len(), self.in_features, "linear input size mismatch");
        let mut y = Tensor::zeros(self.output_shape(s));
        gemm(
            Mat::new(x.data(), s.n, self.in_features),
            Mat::new(&self.weight.value, self.out_features, self.in_features).t(),
            0.0,
            y.data_mut(),
        );
        for row in y.data_mut().chunks_mut(self.out_features) {
            for (v, b) in row.iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        y
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.cache.take().expect("Linear::backward without forward");
        let n = x.shape().n;
        let g = Mat::new(grad_out.data(), n, self.out_features);
        let mut dw = vec![0.0; self.out_features * self.in_features];
        gemm(g.t(), Mat::new(x.data(), n, self.in_features), 0.0, &mut dw);
        self.weight.accumulate_grad(&dw);
        let mut db = vec![0.0; self.out_features];
        for row in grad_out.data().chunks(self.out_features) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        self.bias.accumulate_grad(&db);
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            g,
            Mat::new(&self.weight.value, self.out_features, self.in_features),
            0.0,
            dx.data_mut(),
        );
        dx
    }

    fn output_shape(&self, input: Shape) -> Shape {
        Shape::new(input.n, self.out_features, 1, 1)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
