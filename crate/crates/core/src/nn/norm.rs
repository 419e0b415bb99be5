use super::{join, Params};
use crate::tensor::{Scalar, Tensor};

const EPS: f64 = 1e-5;

/// Group normalization with a per-channel affine transform.
///
/// Statistics are per sample, so training and inference behave identically
/// and there is no running state to checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    groups: usize,
}

#[derive(Clone, Debug)]
pub struct NormCache<T> {
    xhat: Tensor<T>,
    rstd: Vec<T>,
}

impl<T: Scalar> GroupNorm<T> {
    pub fn new(channels: usize, groups: usize) -> Self {
        assert!(groups >= 1 && channels.is_multiple_of(groups), "groups must divide channels");
        GroupNorm {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            groups,
        }
    }

    pub fn reset(&mut self) {
        self.gamma.fill(T::one());
        self.beta.fill(T::zero());
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
        let (c, h, w) = x.chw();
        assert_eq!(c, self.gamma.len(), "norm channels");
        let hw = h * w;
        let group_len = (c / self.groups) * hw;
        let eps = T::from_f64_lossy(EPS);
        let n = T::from_usize(group_len).unwrap();
        let mut xhat = x.zeros_like();
        let mut rstd = Vec::with_capacity(self.groups);
        for (src, dst) in x
            .data()
            .chunks(group_len)
            .zip(xhat.data_mut().chunks_mut(group_len))
        {
            let mean = src.iter().copied().sum::<T>() / n;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = (v - mean) * r;
            }
            rstd.push(r);
        }
        let mut y = xhat.clone();
        for (ch, plane) in y.data_mut().chunks_mut(hw).enumerate() {
            let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
            for v in plane {
                *v = g * *v + b;
            }
        }
        (y, NormCache { xhat, rstd })
    }

    pub fn backward(&self, cache: &NormCache<T>, dy: &Tensor<T>, grad: &mut GroupNorm<T>) -> Tensor<T> {
        let (c, h, w) = dy.chw();
        let hw = h * w;
        let mut dxhat = dy.zeros_like();
        for ch in 0..c {
            let dplane = &dy.data()[ch * hw..(ch + 1) * hw];
            let xplane = &cache.xhat.data()[ch * hw..(ch + 1) * hw];
            let mut dg = T::zero();
            let mut db = T::zero();
            for (&d, &xh) in dplane.iter().zip(xplane) {
                dg = dg + d * xh;
                db = db + d;
            }
            grad.gamma.data_mut()[ch] = grad.gamma.data()[ch] + dg;
            grad.beta.data_mut()[ch] = grad.beta.data()[ch] + db;
            let g = self.gamma.data()[ch];
            for (o, &d) in dxhat.data_mut()[ch * hw..(ch + 1) * hw].iter_mut().zip(dplane) {
                *o = d * g;
            }
        }
        let group_len = (c / self.groups) * hw;
        let n = T::from_usize(group_len).unwrap();
        let mut dx = dy.zeros_like();
        for (gi, ((dxh, xh), out)) in dxhat
            .data()
            .chunks(group_len)
            .zip(cache.xhat.data().chunks(group_len))
            .zip(dx.data_mut().chunks_mut(group_len))
            .enumerate()
        {
            let mean_d = dxh.iter().copied().sum::<T>() / n;
            let mean_dx = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / n;
            let r = cache.rstd[gi];
            for ((o, &d), &x) in out.iter_mut().zip(dxh).zip(xh) {
                *o = r * (d - mean_d - x * mean_dx);
            }
        }
        dx
    }
}

impl<T: Scalar> Params<T> for GroupNorm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_has_zero_mean_unit_variance_per_group() {
        let x = Tensor::<f64>::from_vec(&[4, 3, 3], (0..36).map(|i| (i as f64).powf(1.3)).collect());
        let norm = GroupNorm::new(4, 2);
        let (y, _) = norm.forward(&x);
        for g in y.data().chunks(18) {
            let mean: f64 = g.iter().sum::<f64>() / 18.0;
            let var: f64 = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 18.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut norm = GroupNorm::<f64>::new(2, 1);
        norm.gamma = Tensor::from_vec(&[2], vec![0.7, -1.3]);
        norm.beta = Tensor::from_vec(&[2], vec![0.1, 0.2]);
        let x = Tensor::from_vec(&[2, 2, 2], vec![0.3, -0.2, 1.1, 0.5, -0.7, 0.9, 0.05, 0.4]);
        let dy = Tensor::from_vec(&[2, 2, 2], vec![1.0, -0.5, 0.25, 2.0, 0.3, -1.2, 0.7, 0.1]);
        let loss = |x: &Tensor<f64>| -> f64 {
            let (y, _) = norm.forward(x);
            y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = norm.forward(&x);
        let mut grad = GroupNorm::new(2, 1);
        grad.zero_params();
        let dx = norm.backward(&cache, &dy, &mut grad);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-7, "i={i}: {fd} vs {}", dx.data()[i]);
        }
    }
}
