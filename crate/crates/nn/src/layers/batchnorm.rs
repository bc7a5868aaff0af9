use rand::RngCore;

use crate::layer::Layer;
use crate::par;
use crate::param::{Param, ParamKind};
use crate::tensor::{Shape, Tensor};

/// Per-channel batch normalisation over (N, H, W).
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    channels: usize,
    eps: f64,
    momentum: f64,
    gamma: Param,
    beta: Param,
    running_mean: Param,
    running_var: Param,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self::with_params(name, channels, 1e-3, 0.1)
    }

    pub fn with_params(name: &str, channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            channels,
            eps,
            momentum,
            gamma: Param::filled(format!("{name}.gamma"), vec![channels], 1.0, ParamKind::Trainable),
            beta: Param::zeros(format!("{name}.beta"), vec![channels], ParamKind::Trainable),
            running_mean: Param::zeros(format!("{name}.running_mean"), vec![channels], ParamKind::Buffer),
            running_var: Param::filled(format!("{name}.running_var"), vec![channels], 1.0, ParamKind::Buffer),
            cache: None,
        }
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], inv_std: &[f64]) -> (Tensor, Tensor) {
        let s = x.shape();
        let plane = s.plane();
        let mut xhat = Tensor::zeros(s);
        let mut y = Tensor::zeros(s);
        let gamma = &self.gamma.value;
        let beta = &self.beta.value;
        let sl = s.sample_len();
        par::for_each_chunk_pair_mut(xhat.data_mut(), sl, y.data_mut(), sl, |i, xh, ys| {
            let xs = x.sample(i);
            for c in 0..s.c {
                let r = c * plane..(c + 1) * plane;
                for ((xv, h), o) in xs[r.clone()].iter().zip(&mut xh[r.clone()]).zip(&mut ys[r]) {
                    *h = (xv - mean[c]) * inv_std[c];
                    *o = gamma[c] * *h + beta[c];
                }
            }
        });
        (xhat, y)
    }
}

/// Sum over (N, H, W) of `f(sample, channel_slice)` for each channel.
fn per_channel<F>(s: Shape, f: F) -> Vec<f64>
where
    F: Fn(usize, usize, std::ops::Range<usize>) -> f64 + Sync + Send,
{
    let plane = s.plane();
    par::map(s.c, |c| {
        let mut acc = 0.0;
        for n in 0..s.n {
            acc += f(n, c, c * plane..(c + 1) * plane);
        }
        acc
    })
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, _rng: &mut dyn RngCore) -> Tensor {
        let s = x.shape();
        assert_eq!(s.c, self.channels, "batchnorm channel mismatch");
        let m = (s.n * s.plane()) as f64;
        let mean: Vec<f64> = per_channel(s, |n, _, r| x.sample(n)[r].iter().sum::<f64>())
            .into_iter()
            .map(|v| v / m)
            .collect();
        let var: Vec<f64> = per_channel(s, |n, c, r| {
            x.sample(n)[r]
                .iter()
                .map(|v| (v - mean[c]) * (v - mean[c]))
                .sum::<f64>()
        })
        .into_iter()
        .map(|v| v / m)
        .collect();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (xhat, y) = self.normalize(x, &mean, &inv_std);

        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for c in 0..self.channels {
            let rm = &mut self.running_mean.value[c];
            *rm = (1.0 - self.momentum) * *rm + self.momentum * mean[c];
            let rv = &mut self.running_var.value[c];
            *rv = (1.0 - self.momentum) * *rv + self.momentum * var[c] * unbias;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.shape().c, self.channels, "batchnorm channel mismatch");
        let inv_std: Vec<f64> = self
            .running_var
            .value
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect();
        self.normalize(x, &self.running_mean.value, &inv_std).1
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let BnCache { xhat, inv_std } = self.cache.take().expect("BatchNorm2d::backward without forward");
        let s = grad_out.shape();
        let m = (s.n * s.plane()) as f64;
        let dbeta = per_channel(s, |n, _, r| grad_out.sample(n)[r].iter().sum::<f64>());
        let dgamma = per_channel(s, |n, _, r| {
            grad_out.sample(n)[r.clone()]
                .iter()
                .zip(&xhat.sample(n)[r])
                .map(|(g, h)| g * h)
                .sum::<f64>()
        });
        let gamma = self.gamma.value.clone();
        let plane = s.plane();
        let mut dx = Tensor::zeros(s);
        par::for_each_chunk_mut(dx.data_mut(), s.sample_len(), |n, dxs| {
            let g = grad_out.sample(n);
            let h = xhat.sample(n);
            for c in 0..s.c {
                let k = gamma[c] * inv_std[c] / m;
                for i in c * plane..(c + 1) * plane {
                    dxs[i] = k * (m * g[i] - dbeta[c] - h[i] * dgamma[c]);
                }
            }
        });
        self.gamma.accumulate_grad(&dgamma);
        self.beta.accumulate_grad(&dbeta);
        dx
    }

    fn output_shape(&self, input: Shape) -> Shape {
        input
    }

    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}
