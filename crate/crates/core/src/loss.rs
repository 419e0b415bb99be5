//! Balanced MSE / MAE: per-pixel errors weighted by the observed rain rate
//! so that rare heavy rain is not drowned out by the dry background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::RainField;
use crate::tensor::{Scalar, Tensor};

/// Piecewise-constant weight per rain-rate bin. Bin `k` is
/// `[thresholds[k-1], thresholds[k])`, with the first bin open below and the
/// last bin closed above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSchedule {
    pub thresholds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        WeightSchedule {
            thresholds: vec![0.5, 2.0, 5.0, 10.0],
            weights: vec![1.0, 2.0, 5.0, 10.0, 30.0],
        }
    }
}

impl WeightSchedule {
    /// All pixels weighted 1: the plain MSE / MAE.
    pub fn uniform() -> Self {
        WeightSchedule {
            thresholds: vec![],
            weights: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.thresholds.len() + 1 {
            return Err(Error::Config(format!(
                "{} thresholds need {} weights, got {}",
                self.thresholds.len(),
                self.thresholds.len() + 1,
                self.weights.len()
            )));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1])
            || self.thresholds.iter().any(|t| !t.is_finite())
        {
            return Err(Error::Config("weight thresholds must be finite and strictly ascending".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Config("weights must be positive".into()));
        }
        Ok(())
    }

    pub fn weight_for(&self, rain_rate: f64) -> f64 {
        let bin = self.thresholds.iter().take_while(|&&t| rain_rate >= t).count();
        self.weights[bin]
    }

    pub fn weights_for(&self, rain_rates: &[f64]) -> Vec<f64> {
        rain_rates.iter().map(|&r| self.weight_for(r)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightSchedule {
            thresholds: self.thresholds.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }
}

/// Weight map for a physical-space (mm/h) target.
pub fn pixel_weights(target: &RainField, ws: &WeightSchedule) -> Vec<f64> {
    ws.weights_for(&target.data)
}

fn check_lengths(pred: usize, target: usize, weights: usize) -> Result<()> {
    if pred != target || pred != weights {
        return Err(Error::Shape(format!(
            "loss inputs differ in size: pred {pred}, target {target}, weights {weights}"
        )));
    }
    if pred == 0 {
        return Err(Error::Shape("loss over an empty field".into()));
    }
    Ok(())
}

/// `mean(w * (pred - target)^2)`.
pub fn b_mse(pred: &[f64], target: &[f64], weights: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), target.len(), weights.len())?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `mean(w * |pred - target|)`.
pub fn b_mae(pred: &[f64], target: &[f64], weights: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), target.len(), weights.len())?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((p, t), w)| w * (p - t).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    BMae,
    BMse,
    /// `B-MSE + B-MAE`
    Sum,
}

/// Loss value (accumulated in `f64`) and its gradient with respect to
/// `pred`, averaged over every element of the tensor.
pub fn loss_and_grad<T: Scalar>(
    kind: LossKind,
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    check_lengths(pred.len(), target.len(), weights.len())?;
    if pred.shape() != target.shape() || pred.shape() != weights.shape() {
        return Err(Error::Shape(format!(
            "loss shapes differ: {:?} vs {:?} vs {:?}",
            pred.shape(),
            target.shape(),
            weights.shape()
        )));
    }
    let n = pred.len() as f64;
    let inv_n = T::from_f64_lossy(1.0 / n);
    let two = T::from_f64_lossy(2.0);
    let (use_mse, use_mae) = match kind {
        LossKind::BMae => (false, true),
        LossKind::BMse => (true, false),
        LossKind::Sum => (true, true),
    };
    let mut total = 0.0f64;
    let mut grad = pred.zeros_like();
    for (((g, &p), &t), &w) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
        .zip(weights.data())
    {
        let e = p - t;
        let mut d = T::zero();
        if use_mse {
            total += (w * e * e).as_f64();
            d = d + two * w * e;
        }
        if use_mae {
            total += (w * e.abs()).as_f64();
            d = d + w * e.signum() * if e == T::zero() { T::zero() } else { T::one() };
        }
        *g = d * inv_n;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_lookup_examples() {
        let ws = WeightSchedule::default();
        assert_eq!(ws.weight_for(0.1), 1.0);
        assert_eq!(ws.weight_for(0.5), 2.0);
        assert_eq!(ws.weight_for(9.999), 10.0);
        assert_eq!(ws.weight_for(10.0), 30.0);
        assert_eq!(ws.weight_for(19.0), 30.0);
        let zero = RainField::zeros(4, 4);
        assert!(pixel_weights(&zero, &ws).iter().all(|&w| w == 1.0));
    }

    #[test]
    fn single_pixel_hand_arithmetic() {
        assert_eq!(b_mse(&[3.0], &[1.0], &[30.0]).unwrap(), 120.0);
        assert_eq!(b_mae(&[3.0], &[1.0], &[30.0]).unwrap(), 60.0);
        assert_eq!(b_mse(&[1.0, 2.0], &[1.0, 2.0], &[5.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn validation_rejects_bad_schedules() {
        let mut ws = WeightSchedule::default();
        ws.weights.pop();
        assert!(ws.validate().is_err());
        let ws = WeightSchedule {
            thresholds: vec![2.0, 1.0],
            weights: vec![1.0, 2.0, 3.0],
        };
        assert!(ws.validate().is_err());
        let ws = WeightSchedule {
            thresholds: vec![1.0],
            weights: vec![1.0, 0.0],
        };
        assert!(ws.validate().is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(b_mse(&[1.0], &[1.0, 2.0], &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn mae_gradient_matches_finite_differences_off_the_kink() {
        let pred = Tensor::<f64>::from_vec(&[1, 2, 2], vec![0.3, -0.4, 0.9, -1.0]);
        let target = Tensor::<f64>::from_vec(&[1, 2, 2], vec![0.1, -0.2, -0.5, -0.7]);
        let w = Tensor::<f64>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 5.0, 30.0]);
        for kind in [LossKind::BMae, LossKind::BMse, LossKind::Sum] {
            let (_, g) = loss_and_grad(kind, &pred, &target, &w).unwrap();
            for i in 0..4 {
                let h = 1e-6;
                let mut p = pred.clone();
                p.data_mut()[i] += h;
                let up = loss_and_grad(kind, &p, &target, &w).unwrap().0;
                p.data_mut()[i] -= 2.0 * h;
                let down = loss_and_grad(kind, &p, &target, &w).unwrap().0;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - g.data()[i]).abs() < 1e-8, "{kind:?} {i}");
            }
        }
    }
}
