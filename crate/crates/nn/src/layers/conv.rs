use rand::RngCore;

use crate::gemm::{gemm, Mat};
use crate::layer::Layer;
use crate::par;
use crate::param::Param;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Depthwise when true (one filter per input channel, `out == in`).
    pub depthwise: bool,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            depthwise: false,
            bias: false,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            stride,
            depthwise: true,
            ..Self::new(channels, channels, kernel)
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = p;
        self
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.padding).saturating_sub(self.kernel) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        let per_filter = if self.depthwise { 1 } else { self.in_channels };
        self.out_channels * per_filter * self.kernel * self.kernel
    }
}

/// 2-D convolution, either dense (groups = 1) or depthwise.
#[derive(Clone, Debug)]
pub struct Conv2d {
    spec: ConvSpec,
    weight: Param,
    bias: Option<Param>,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, spec: ConvSpec, rng: &mut dyn RngCore) -> Self {
        assert!(spec.stride >= 1 && spec.kernel >= 1);
        if spec.depthwise {
            assert_eq!(
                spec.in_channels, spec.out_channels,
                "depthwise conv keeps channel count"
            );
        }
        let per_filter = if spec.depthwise { 1 } else { spec.in_channels };
        // He-normal on fan-out.
        let fan_out =
            spec.kernel * spec.kernel * spec.out_channels / if spec.depthwise { spec.out_channels } else { 1 };
        let std = (2.0 / fan_out.max(1) as f64).sqrt();
        let weight = Param::normal(
            format!("{name}.weight"),
            vec![spec.out_channels, per_filter, spec.kernel, spec.kernel],
            std,
            rng,
        );
        let bias = spec.bias.then(|| {
            Param::zeros(
                format!("{name}.bias"),
                vec![spec.out_channels],
                crate::ParamKind::Trainable,
            )
        });
        Self {
            spec,
            weight,
            bias,
            cache: None,
        }
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &Param {
        &self.weight
    }

    fn is_pointwise(&self) -> bool {
        self.spec.kernel == 1 && self.spec.stride == 1 && self.spec.padding == 0
    }

    fn check_input(&self, s: Shape) {
        assert_eq!(
            s.c, self.spec.in_channels,
            "conv {} expects {} input channels, got {}",
            self.weight.name, self.spec.in_channels, s.c
        );
    }

    fn run(&self, x: &Tensor) -> Tensor {
        let s = x.shape();
        self.check_input(s);
        let out_shape = self.output_shape(s);
        let mut out = Tensor::zeros(out_shape);
        let olen = out_shape.sample_len();
        par::for_each_chunk_mut(out.data_mut(), olen, |i, y| {
            let xs = x.sample(i);
            if self.spec.depthwise {
                depthwise_forward(&self.spec, s, xs, &self.weight.value, y, out_shape);
            } else {
                let k2c = self.spec.in_channels * self.spec.kernel * self.spec.kernel;
                let plane = out_shape.plane();
                let w = Mat::new(&self.weight.value, self.spec.out_channels, k2c);
                if self.is_pointwise() {
                    gemm(w, Mat::new(xs, k2c, plane), 0.0, y);
                } else {
                    let cols = im2col(&self.spec, s, xs, out_shape);
                    gemm(w, Mat::new(&cols, k2c, plane), 0.0, y);
                }
            }
            if let Some(b) = &self.bias {
                let plane = out_shape.plane();
                for (o, chunk) in y.chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += b.value[o]);
                }
            }
        });
        out
    }
}

fn im2col(spec: &ConvSpec, s: Shape, x: &[f64], out: Shape) -> Vec<f64> {
    let k = spec.kernel;
    let plane = out.plane();
    let mut cols = vec![0.0; spec.in_channels * k * k * plane];
    for c in 0..spec.in_channels {
        let xc = &x[c * s.plane()..(c + 1) * s.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..out.h {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let src = &xc[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for ox in 0..out.w {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < s.w as isize {
                            dst[oy * out.w + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(spec: &ConvSpec, s: Shape, cols: &[f64], out: Shape, dx: &mut [f64]) {
    let k = spec.kernel;
    let plane = out.plane();
    for c in 0..spec.in_channels {
        let dxc = &mut dx[c * s.plane()..(c + 1) * s.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..out.h {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    for ox in 0..out.w {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < s.w as isize {
                            dxc[iy as usize * s.w + ix as usize] += src[oy * out.w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_forward(spec: &ConvSpec, s: Shape, x: &[f64], w: &[f64], y: &mut [f64], out: Shape) {
    let k = spec.kernel;
    for c in 0..spec.in_channels {
        let xc = &x[c * s.plane()..(c + 1) * s.plane()];
        let wc = &w[c * k * k..(c + 1) * k * k];
        let yc = &mut y[c * out.plane()..(c + 1) * out.plane()];
        for oy in 0..out.h {
            for ox in 0..out.w {
                let mut acc = 0.0;
                for ky in 0..k {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let row = iy as usize * s.w;
                    for kx in 0..k {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < s.w as isize {
                            acc += xc[row + ix as usize] * wc[ky * k + kx];
                        }
                    }
                }
                yc[oy * out.w + ox] = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn depthwise_backward(
    spec: &ConvSpec,
    s: Shape,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    out: Shape,
    dx: &mut [f64],
    dw: &mut [f64],
) {
    let k = spec.kernel;
    for c in 0..spec.in_channels {
        let xc = &x[c * s.plane()..(c + 1) * s.plane()];
        let wc = &w[c * k * k..(c + 1) * k * k];
        let dyc = &dy[c * out.plane()..(c + 1) * out.plane()];
        let dxc = &mut dx[c * s.plane()..(c + 1) * s.plane()];
        let dwc = &mut dw[c * k * k..(c + 1) * k * k];
        for oy in 0..out.h {
            for ox in 0..out.w {
                let g = dyc[oy * out.w + ox];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let row = iy as usize * s.w;
                    for kx in 0..k {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < s.w as isize {
                            let idx = row + ix as usize;
                            dwc[ky * k + kx] += g * xc[idx];
                            dxc[idx] += g * wc[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _rng: &mut dyn RngCore) -> Tensor {
        let y = self.run(x);
        self.cache = Some(x.clone());
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.run(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.cache.take().expect("Conv2d::backward without forward");
        let s = x.shape();
        let out = grad_out.shape();
        let spec = self.spec;
        let wlen = spec.weight_len();
        let weight = &self.weight.value;
        let pointwise = self.is_pointwise();
        let has_bias = self.bias.is_some();

        // Per-sample partial gradients, reduced below in sample order.
        let partials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = par::map(s.n, |i| {
            let xs = x.sample(i);
            let dy = grad_out.sample(i);
            let mut dx = vec![0.0; s.sample_len()];
            let mut dw = vec![0.0; wlen];
            if spec.depthwise {
                depthwise_backward(&spec, s, xs, weight, dy, out, &mut dx, &mut dw);
            } else {
                let k2c = spec.in_channels * spec.kernel * spec.kernel;
                let plane = out.plane();
                let dym = Mat::new(dy, spec.out_channels, plane);
                let w = Mat::new(weight, spec.out_channels, k2c);
                if pointwise {
                    gemm(dym, Mat::new(xs, k2c, plane).t(), 0.0, &mut dw);
                    gemm(w.t(), dym, 0.0, &mut dx);
                } else {
                    let cols = im2col(&spec, s, xs, out);
                    gemm(dym, Mat::new(&cols, k2c, plane).t(), 0.0, &mut dw);
                    let mut dcols = vec![0.0; k2c * plane];
                    gemm(w.t(), dym, 0.0, &mut dcols);
                    col2im(&spec, s, &dcols, out, &mut dx);
                }
            }
            let db = if has_bias {
                dy.chunks(out.plane()).map(|c| c.iter().sum()).collect()
            } else {
                Vec::new()
            };
            (dx, dw, db)
        });

        let mut dx = Tensor::zeros(s);
        for (i, (dxs, dw, db)) in partials.into_iter().enumerate() {
            dx.sample_mut(i).copy_from_slice(&dxs);
            self.weight.accumulate_grad(&dw);
            if let Some(b) = &mut self.bias {
                b.accumulate_grad(&db);
            }
        }
        dx
    }

    fn output_shape(&self, input: Shape) -> Shape {
        Shape::new(
            input.n,
            self.spec.out_channels,
            self.spec.out_size(input.h),
            self.spec.out_size(input.w),
        )
    }

    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 7-loop convolution used as an oracle.
    fn naive(spec: &ConvSpec, x: &Tensor, w: &[f64]) -> Tensor {
        let s = x.shape();
        let oh = spec.out_size(s.h);
        let ow = spec.out_size(s.w);
        let mut y = Tensor::zeros(Shape::new(s.n, spec.out_channels, oh, ow));
        let k = spec.kernel;
        for n in 0..s.n {
            for o in 0..spec.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        let chans: Vec<usize> = if spec.depthwise { vec![o] } else { (0..s.c).collect() };
                        for (ci, &c) in chans.iter().enumerate() {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                                    let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((n * s.c + c) * s.h + iy as usize) * s.w + ix as usize];
                                    let per = if spec.depthwise { 1 } else { s.c };
                                    let wv = w[((o * per + ci) * k + ky) * k + kx];
                                    acc += xv * wv;
                                }
                            }
                        }
                        y.data_mut()[((n * spec.out_channels + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn random_input(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
        use rand::Rng;
        Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dense_and_depthwise_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [
            ConvSpec::new(3, 5, 3).stride(2),
            ConvSpec::new(4, 6, 1).padding(0),
            ConvSpec::new(2, 3, 3).padding(0),
            ConvSpec::depthwise(4, 5, 2),
            ConvSpec::depthwise(3, 3, 1),
        ];
        for spec in specs {
            let conv = Conv2d::new("c", spec, &mut rng);
            let x = random_input(Shape::new(2, spec.in_channels, 7, 6), &mut rng);
            let got = conv.infer(&x);
            let want = naive(&spec, &x, &conv.weight.value);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "{spec:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in [
            ConvSpec::new(2, 3, 3).stride(2).with_bias(),
            ConvSpec::depthwise(3, 3, 1),
            ConvSpec::new(3, 2, 1).padding(0),
        ] {
            let mut conv = Conv2d::new("c", spec, &mut rng);
            let x = random_input(Shape::new(2, spec.in_channels, 5, 5), &mut rng);
            let y = conv.forward(&x, &mut rng);
            // loss = sum(y * r) for a fixed random r
            let r = random_input(y.shape(), &mut rng);
            let dx = conv.backward(&r);
            let loss =
                |c: &Conv2d, x: &Tensor| -> f64 { c.infer(x).data().iter().zip(r.data()).map(|(a, b)| a * b).sum() };
            let h = 1e-6;
            for i in [0, 3, x.shape().len() - 1] {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
                assert!((fd - dx.data()[i]).abs() < 1e-6, "dx[{i}] {fd} vs {}", dx.data()[i]);
            }
            let g = conv.weight.grad().to_vec();
            for i in [0, g.len() / 2, g.len() - 1] {
                let mut cp = conv.clone();
                cp.weight.value[i] += h;
                let mut cm = conv.clone();
                cm.weight.value[i] -= h;
                let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6, "dw[{i}] {fd} vs {}", g[i]);
            }
        }
    }
}
