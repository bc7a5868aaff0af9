use facefake_nn::layers::ConvSpec;
use facefake_nn::{Dropout, GlobalAvgPool, Layer, Linear, Param, Sequential, Shape, Tensor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backbone::BackboneConfig;
use super::blocks::{conv_bn_act, MbConv, MbConvSpec};
use super::ClassifierError;
use crate::image::{batch_tensor, ImageBuffer};

/// Lowest and highest probability the head reports, keeping outputs strictly inside (0, 1).
pub const PROB_FLOOR: f64 = 1e-15;

/// Scaled MBConv backbone with a single-logit sigmoid head.
pub struct EfficientNet {
    config: BackboneConfig,
    net: Sequential,
    blocks: Vec<MbConvSpec>,
}

/// Per-block plan derived from a backbone config, in execution order.
pub fn block_plan(config: &BackboneConfig) -> Vec<MbConvSpec> {
    let total = config.block_count();
    let mut specs = Vec::with_capacity(total);
    let mut c_in = config.stem_channels;
    for stage in &config.stages {
        for r in 0..stage.repeats {
            let index = specs.len();
            specs.push(MbConvSpec {
                in_channels: c_in,
                out_channels: stage.channels_out,
                expansion: stage.expansion,
                kernel: stage.kernel,
                stride: if r == 0 { stage.stride } else { 1 },
                se_ratio: stage.se_ratio,
                drop_connect: config.drop_connect_rate * index as f64 / total as f64,
            });
            c_in = stage.channels_out;
        }
    }
    specs
}

impl EfficientNet {
    pub fn new(config: BackboneConfig, seed: u64) -> Result<Self, ClassifierError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng: &mut dyn RngCore = &mut rng;
        let blocks = block_plan(&config);
        let mut net = Sequential::new();
        net.push(conv_bn_act(
            "stem",
            ConvSpec::new(3, config.stem_channels, 3).stride(2),
            rng,
        ));
        for (i, spec) in blocks.iter().enumerate() {
            net.push(MbConv::new(&format!("blocks.{i}"), spec.clone(), rng));
        }
        let last = blocks.last().map_or(config.stem_channels, |b| b.out_channels);
        net.push(conv_bn_act("head", ConvSpec::new(last, config.head_channels, 1), rng));
        net.push(GlobalAvgPool::new());
        net.push(Dropout::new(config.dropout));
        net.push(Linear::new("classifier", config.head_channels, 1, rng));
        Ok(Self { config, net, blocks })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[MbConvSpec] {
        &self.blocks
    }

    /// Top-level layers: stem, every block, head, pool, dropout, classifier.
    pub fn layers(&self) -> &[Box<dyn Layer>] {
        self.net.layers()
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        let r = self.config.input_resolution;
        Shape::new(batch, 3, r, r)
    }

    /// Output shape of every top-level layer for a batch of `batch`.
    pub fn layer_shapes(&self, batch: usize) -> Vec<Shape> {
        let mut s = self.input_shape(batch);
        self.net
            .layers()
            .iter()
            .map(|l| {
                s = l.output_shape(s);
                s
            })
            .collect()
    }

    pub fn check_input(&self, x: &Tensor) -> Result<(), ClassifierError> {
        let s = x.shape();
        let expected = self.input_shape(s.n);
        if s.n == 0 || s != expected {
            return Err(ClassifierError::InputShape {
                expected: expected.to_string(),
                actual: s.to_string(),
            });
        }
        Ok(())
    }

    /// Evaluation-mode logits, one per sample.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>, ClassifierError> {
        self.check_input(x)?;
        Ok(self.net.infer(x).into_vec())
    }

    /// Evaluation-mode fake probabilities, shape `(batch, 1)` flattened.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>, ClassifierError> {
        Ok(self
            .logits(x)?
            .into_iter()
            .map(|z| facefake_nn::layers::sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
            .collect())
    }

    /// Resize crops to the model resolution and predict them.
    pub fn predict_images(&self, images: &[ImageBuffer]) -> Result<Vec<f64>, ClassifierError> {
        if images.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        self.predict(&prepare_batch(images, self.config.input_resolution))
    }

    /// Training-mode logits; caches activations for [`Self::backward_logits`].
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Result<Vec<f64>, ClassifierError> {
        self.check_input(x)?;
        Ok(self.net.forward(x, rng).into_vec())
    }

    /// Backpropagate `d loss / d logit` for the batch of the last training forward.
    pub fn backward_logits(&mut self, grad: &[f64]) {
        let g = Tensor::from_vec(Shape::new(grad.len(), 1, 1, 1), grad.to_vec()).expect("one logit per sample");
        self.net.backward(&g);
    }
}

/// Resize each crop to `resolution` square and stack into a `[0, 1]` NCHW batch.
pub fn prepare_batch(images: &[ImageBuffer], resolution: usize) -> Tensor {
    let resized: Vec<ImageBuffer> = images
        .iter()
        .map(|img| {
            let img = if img.channels() == 3 {
                img.clone()
            } else {
                let d: Vec<f32> = img.data().iter().flat_map(|&v| [v, v, v]).collect();
                ImageBuffer::from_clamped(img.height(), img.width(), 3, d, img.is_normalized())
            };
            img.resize(resolution, resolution)
        })
        .collect();
    batch_tensor(&resized)
}

impl Layer for EfficientNet {
    fn forward(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Tensor {
        self.net.forward(x, rng)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.net.infer(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        self.net.backward(grad_out)
    }

    fn output_shape(&self, input: Shape) -> Shape {
        self.net.output_shape(input)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.net.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.net.visit_params_mut(f);
    }
}
