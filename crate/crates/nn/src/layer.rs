use rand::RngCore;

use crate::param::Param;
use crate::tensor::{Shape, Tensor};

/// A differentiable building block.
///
/// `forward` runs in training mode and caches whatever `backward` needs;
/// `infer` is the side-effect-free evaluation path and may be called
/// concurrently from several threads.
pub trait Layer: Send + Sync {
    fn forward(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Tensor;

    fn infer(&self, x: &Tensor) -> Tensor;

    /// Consumes the cached activations from the last `forward`, accumulates
    /// parameter gradients and returns the gradient with respect to the input.
    fn backward(&mut self, grad_out: &Tensor) -> Tensor;

    fn output_shape(&self, input: Shape) -> Shape;

    fn visit_params(&self, f: &mut dyn FnMut(&Param));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| {
            if p.is_trainable() {
                n += p.len()
            }
        });
        n
    }

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }
}
