mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod linear;
mod pool;
mod sequential;

pub use activation::{sigmoid, silu, silu_grad, Relu, Sigmoid, Silu};
pub use batchnorm::BatchNorm2d;
pub use conv::{Conv2d, ConvSpec};
pub use dropout::Dropout;
pub use linear::Linear;
pub use pool::GlobalAvgPool;
pub use sequential::Sequential;
