//! Minimal CPU neural-network engine.
//!
//! Tensors are dense `f64` NCHW buffers. Every layer implements an explicit
//! forward/backward pair instead of a general autograd tape, which keeps the
//! numerics easy to audit and makes finite-difference checks straightforward.
//!
//! Batch-level work is spread over samples with rayon when the `parallel`
//! feature is enabled (the default). Reductions over the batch are always
//! performed in sample order, so results are bit-identical between the
//! parallel and sequential paths.

pub mod gemm;
pub mod layer;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod par;
pub mod param;
pub mod tensor;

pub use layer::Layer;
pub use layers::{BatchNorm2d, Conv2d, Dropout, GlobalAvgPool, Linear, Relu, Sequential, Sigmoid, Silu};
pub use optim::Sgd;
pub use param::{Param, ParamKind};
pub use tensor::{Shape, Tensor};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("data length {len} does not match shape {shape}")]
    DataLength { len: usize, shape: Shape },
}

pub type Result<T> = std::result::Result<T, NnError>;
