use rand::Rng;

use super::{fan_in_uniform, join, Params};
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer on a flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `(out, in)`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.inputs();
        fan_in_uniform(&mut self.weight, fan_in, rng);
        self.bias.fill(T::zero());
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let n = self.inputs();
        assert_eq!(x.len(), n);
        self.weight
            .data()
            .chunks(n)
            .zip(self.bias.data())
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }

    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Linear<T>) -> Vec<T> {
        let n = self.inputs();
        let mut dx = vec![T::zero(); n];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias.data_mut()[o] = grad.bias.data()[o] + g;
            let gw = &mut grad.weight.data_mut()[o * n..(o + 1) * n];
            for (gwi, &xi) in gw.iter_mut().zip(x) {
                *gwi = *gwi + g * xi;
            }
            let w = &self.weight.data()[o * n..(o + 1) * n];
            for (d, &wi) in dx.iter_mut().zip(w) {
                *d = *d + g * wi;
            }
        }
        dx
    }
}

impl<T: Scalar> Params<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}
