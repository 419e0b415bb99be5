use serde::{Deserialize, Serialize};

use crate::nn::Params;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept in `f64` and follow the
/// parameter traversal order of the model.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update<T: Scalar, P: Params<T>>(&mut self, params: &mut P, grads: &P) {
        let grads = grads.named_params();
        let mut params = params.named_params_mut();
        assert_eq!(params.len(), grads.len(), "parameter/gradient layout");
        if self.m.is_empty() {
            self.m = grads.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (k, ((_, p), (_, g))) in params.iter_mut().zip(&grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let g = gv.as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let step = learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                *pv = T::from_f64_lossy(pv.as_f64() - step);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;

    #[test]
    fn first_step_moves_each_weight_by_the_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = Linear::<f64>::new(2, 1);
        let mut g = Linear::<f64>::new(2, 1);
        g.weight.data_mut().copy_from_slice(&[3.0, -0.5]);
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        });
        opt.update(&mut p, &g);
        let w = p.weight.data();
        assert!((w[0] + 0.1).abs() < 1e-8);
        assert!((w[1] - 0.1).abs() < 1e-8);
        assert_eq!(p.bias.data()[0], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Linear::<f64>::new(1, 1);
        p.weight.data_mut()[0] = 5.0;
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..2000 {
            let mut g = Linear::<f64>::new(1, 1);
            g.weight.data_mut()[0] = 2.0 * (p.weight.data()[0] - 1.0);
            opt.update(&mut p, &g);
        }
        assert!((p.weight.data()[0] - 1.0).abs() < 1e-2);
    }
}
