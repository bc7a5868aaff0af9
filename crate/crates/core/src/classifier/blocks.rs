//! Squeeze-and-excitation and MBConv blocks with explicit backward passes.

use facefake_nn::layers::ConvSpec;
use facefake_nn::{BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Param, Sequential, Shape, Sigmoid, Silu, Tensor};
use rand::{Rng, RngCore};

/// `conv -> BN -> SiLU`.
pub fn conv_bn_act(name: &str, spec: ConvSpec, rng: &mut dyn RngCore) -> Sequential {
    let out = spec.out_channels;
    Sequential::new()
        .with(Conv2d::new(&format!("{name}.conv"), spec, rng))
        .with(BatchNorm2d::new(&format!("{name}.bn"), out))
        .with(Silu::new())
}

/// Channel gating: `x * sigmoid(W2 silu(W1 mean_hw(x) + b1) + b2)`.
pub struct SqueezeExcite {
    gate: Sequential,
    squeeze: usize,
    cache: Option<(Tensor, Tensor)>,
}

impl SqueezeExcite {
    pub fn new(name: &str, channels: usize, squeeze: usize, rng: &mut dyn RngCore) -> Self {
        let gate = Sequential::new()
            .with(GlobalAvgPool::new())
            .with(Conv2d::new(
                &format!("{name}.reduce"),
                ConvSpec::new(channels, squeeze, 1).with_bias(),
                rng,
            ))
            .with(Silu::new())
            .with(Conv2d::new(
                &format!("{name}.expand"),
                ConvSpec::new(squeeze, channels, 1).with_bias(),
                rng,
            ))
            .with(Sigmoid::new());
        Self {
            gate,
            squeeze,
            cache: None,
        }
    }

    pub fn squeeze_channels(&self) -> usize {
        self.squeeze
    }

    fn apply(x: &Tensor, g: &Tensor) -> Tensor {
        let plane = x.shape().plane();
        let mut y = x.clone();
        for (chunk, &gv) in y.data_mut().chunks_mut(plane).zip(g.data()) {
            chunk.iter_mut().for_each(|v| *v *= gv);
        }
        y
    }
}

impl Layer for SqueezeExcite {
    fn forward(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Tensor {
        let g = self.gate.forward(x, rng);
        let y = Self::apply(x, &g);
        self.cache = Some((x.clone(), g));
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        Self::apply(x, &self.gate.infer(x))
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let (x, g) = self.cache.take().expect("SqueezeExcite::backward without forward");
        let plane = x.shape().plane();
        let mut dg = Tensor::zeros(g.shape());
        for ((d, xs), gs) in dg
            .data_mut()
            .iter_mut()
            .zip(x.data().chunks(plane))
            .zip(grad_out.data().chunks(plane))
        {
            *d = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
        }
        let mut dx = Self::apply(grad_out, &g);
        dx.add_assign(&self.gate.backward(&dg));
        dx
    }

    fn output_shape(&self, input: Shape) -> Shape {
        input
    }

    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.gate.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.gate.visit_params_mut(f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MbConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub expansion: usize,
    pub kernel: usize,
    pub stride: usize,
    pub se_ratio: f64,
    pub drop_connect: f64,
}

impl MbConvSpec {
    pub fn mid_channels(&self) -> usize {
        self.in_channels * self.expansion
    }

    /// Squeeze width is taken from the block input, as in the reference family.
    pub fn squeeze_channels(&self) -> usize {
        ((self.in_channels as f64 * self.se_ratio) as usize).max(1)
    }

    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }
}

/// Inverted bottleneck: optional 1x1 expansion, depthwise conv, SE, 1x1
/// projection, and an identity shortcut with stochastic depth when shapes allow.
pub struct MbConv {
    spec: MbConvSpec,
    expand: Option<Sequential>,
    depthwise: Sequential,
    se: SqueezeExcite,
    project: Sequential,
    /// Per-sample shortcut scale from the last training forward.
    keep: Option<Vec<f64>>,
}

impl MbConv {
    pub fn new(name: &str, spec: MbConvSpec, rng: &mut dyn RngCore) -> Self {
        let mid = spec.mid_channels();
        let expand = (spec.expansion != 1)
            .then(|| conv_bn_act(&format!("{name}.expand"), ConvSpec::new(spec.in_channels, mid, 1), rng));
        let depthwise = conv_bn_act(
            &format!("{name}.depthwise"),
            ConvSpec::depthwise(mid, spec.kernel, spec.stride),
            rng,
        );
        let se = SqueezeExcite::new(&format!("{name}.se"), mid, spec.squeeze_channels(), rng);
        let project = Sequential::new()
            .with(Conv2d::new(
                &format!("{name}.project.conv"),
                ConvSpec::new(mid, spec.out_channels, 1),
                rng,
            ))
            .with(BatchNorm2d::new(&format!("{name}.project.bn"), spec.out_channels));
        Self {
            spec,
            expand,
            depthwise,
            se,
            project,
            keep: None,
        }
    }

    pub fn spec(&self) -> &MbConvSpec {
        &self.spec
    }

    pub fn has_residual(&self) -> bool {
        self.spec.has_residual()
    }

    pub fn has_expansion(&self) -> bool {
        self.expand.is_some()
    }
}

impl Layer for MbConv {
    fn forward(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Tensor {
        let mut h = match &mut self.expand {
            Some(e) => e.forward(x, rng),
            None => x.clone(),
        };
        h = self.depthwise.forward(&h, rng);
        h = self.se.forward(&h, rng);
        h = self.project.forward(&h, rng);
        self.keep = None;
        if self.has_residual() {
            let p = self.spec.drop_connect;
            if p > 0.0 {
                let n = h.shape().n;
                let keep: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < 1.0 - p {
                            1.0 / (1.0 - p)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                for (i, &k) in keep.iter().enumerate() {
                    h.sample_mut(i).iter_mut().for_each(|v| *v *= k);
                }
                self.keep = Some(keep);
            }
            h.add_assign(x);
        }
        h
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut h = match &self.expand {
            Some(e) => e.infer(x),
            None => x.clone(),
        };
        h = self.depthwise.infer(&h);
        h = self.se.infer(&h);
        h = self.project.infer(&h);
        if self.has_residual() {
            h.add_assign(x);
        }
        h
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let mut dh = grad_out.clone();
        if let Some(keep) = self.keep.take() {
            for (i, &k) in keep.iter().enumerate() {
                dh.sample_mut(i).iter_mut().for_each(|v| *v *= k);
            }
        }
        dh = self.project.backward(&dh);
        dh = self.se.backward(&dh);
        dh = self.depthwise.backward(&dh);
        if let Some(e) = &mut self.expand {
            dh = e.backward(&dh);
        }
        if self.has_residual() {
            dh.add_assign(grad_out);
        }
        dh
    }

    fn output_shape(&self, input: Shape) -> Shape {
        let mut s = input;
        if let Some(e) = &self.expand {
            s = e.output_shape(s);
        }
        self.project
            .output_shape(self.se.output_shape(self.depthwise.output_shape(s)))
    }

    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        if let Some(e) = &self.expand {
            e.visit_params(f);
        }
        self.depthwise.visit_params(f);
        self.se.visit_params(f);
        self.project.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        if let Some(e) = &mut self.expand {
            e.visit_params_mut(f);
        }
        self.depthwise.visit_params_mut(f);
        self.se.visit_params_mut(f);
        self.project.visit_params_mut(f);
    }
}
