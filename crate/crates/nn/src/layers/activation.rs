use rand::RngCore;

use crate::layer::Layer;
use crate::param::Param;
use crate::tensor::{Shape, Tensor};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

macro_rules! elementwise {
    ($name:ident, $f:expr, $df:expr, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug, Default)]
        pub struct $name {
            cache: Option<Tensor>,
        }

        impl $name {
            pub fn new() -> Self {
                Self::default()
            }
        }

        impl Layer for $name {
            fn forward(&mut self, x: &Tensor, _rng: &mut dyn RngCore) -> Tensor {
                self.cache = Some(x.clone());
                x.map($f)
            }

            fn infer(&self, x: &Tensor) -> Tensor {
                x.map($f)
            }

            fn backward(&mut self, grad_out: &Tensor) -> Tensor {
                let x = self
                    .cache
                    .take()
                    .expect(concat!(stringify!($name), "::backward without forward"));
                let mut dx = grad_out.clone();
                for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    *d *= $df(xv);
                }
                dx
            }

            fn output_shape(&self, input: Shape) -> Shape {
                input
            }

            fn visit_params(&self, _f: &mut dyn FnMut(&Param)) {}

            fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
        }
    };
}

elementwise!(Silu, silu, silu_grad, "x * sigmoid(x)");
elementwise!(
    Sigmoid,
    sigmoid,
    |x: f64| {
        let s = sigmoid(x);
        s * (1.0 - s)
    },
    "Logistic function."
);
elementwise!(
    Relu,
    |x: f64| x.max(0.0),
    |x: f64| if x > 0.0 { 1.0 } else { 0.0 },
    "max(0, x)"
);
