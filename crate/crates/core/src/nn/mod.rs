//! Layer primitives with explicit backward passes.
//!
//! Every layer works on a single `(C, H, W)` sample. `forward` is pure;
//! `backward` receives whatever the forward pass needs to be replayed and
//! accumulates parameter gradients into a same-shaped gradient layer.

mod conv;
mod linear;
mod norm;
mod ops;

pub use conv::Conv2d;
pub use linear::Linear;
pub use norm::{GroupNorm, NormCache};
pub use ops::{
    max_pool2, max_pool2_backward, sigmoid, silu, silu_backward, upsample2, upsample2_backward,
    UpsampleMode,
};

use rand::Rng;

use crate::tensor::{Scalar, Tensor};

/// Named traversal over trainable parameter tensors.
///
/// The traversal order is stable and is what checkpoints and optimizer state
/// rely on.
pub trait Params<T: Scalar> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>));

    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |name, t| out.push((name, t)));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn zero_params(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(T::zero()));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Fan-in scaled uniform initialization, `U(-sqrt(3/fan_in), sqrt(3/fan_in))`.
///
/// This keeps unit output variance through a linear layer for unit-variance
/// inputs, which matters for the norm-free decoder path.
pub(crate) fn fan_in_uniform<T: Scalar, R: Rng>(t: &mut Tensor<T>, fan_in: usize, rng: &mut R) {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    for v in t.data_mut() {
        *v = T::from_f64_lossy(rng.random_range(-bound..bound));
    }
}
