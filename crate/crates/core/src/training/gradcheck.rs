use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::loss::{loss_and_grad, LossKind, WeightSchedule};
use crate::net::{Mminr, ModelConfig};
use crate::nn::Params;
use crate::radar::denormalize_value;
use crate::tensor::Tensor;

/// Denominator floor for the relative error, so that parameters whose true
/// gradient is essentially zero do not report noise as a large ratio.
const REL_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

fn loss(model: &Mminr<f64>, x: &Tensor<f64>, y: &Tensor<f64>, w: &Tensor<f64>) -> Result<f64> {
    Ok(loss_and_grad(LossKind::BMse, &model.forward(x)?, y, w)?.0)
}

/// Compares backpropagated gradients of the B-MSE loss against central
/// differences in `f64`. Every parameter tensor contributes at least one
/// sampled entry; the rest are drawn uniformly until `samples` is reached.
pub fn gradient_check(config: &ModelConfig, samples: usize, step: f64, seed: u64) -> Result<GradCheckReport> {
    let mut model = Mminr::<f64>::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = config.input_size;
    let x = Tensor::from_vec(
        &[config.n_in, s, s],
        (0..config.n_in * s * s).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let y_data: Vec<f64> = (0..config.m_out * s * s).map(|_| rng.random_range(-1.0..1.0)).collect();
    let schedule = WeightSchedule::default();
    let w = Tensor::from_vec(
        &[config.m_out, s, s],
        y_data.iter().map(|&v| schedule.weight_for(denormalize_value(v))).collect(),
    );
    let y = Tensor::from_vec(&[config.m_out, s, s], y_data);

    let (pred, cache) = model.forward_train(&x)?;
    let (_, dy) = loss_and_grad(LossKind::BMse, &pred, &y, &w)?;
    let mut grad = model.zeros_like();
    model.backward(&cache, &dy, &mut grad);
    let grads: Vec<(String, Vec<f64>)> = grad
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();

    let sizes: Vec<usize> = grads.iter().map(|(_, g)| g.len()).collect();
    let mut picks: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| (k, rng.random_range(0..n)))
        .collect();
    let total: usize = sizes.iter().sum();
    while picks.len() < samples.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut k = 0;
        while flat >= sizes[k] {
            flat -= sizes[k];
            k += 1;
        }
        if !picks.contains(&(k, flat)) {
            picks.push((k, flat));
        }
    }

    let mut entries = Vec::with_capacity(picks.len());
    for (k, i) in picks {
        let orig = model.named_params()[k].1.data()[i];
        let set = |m: &mut Mminr<f64>, v: f64| {
            m.named_params_mut()[k].1.data_mut()[i] = v;
        };
        set(&mut model, orig + step);
        let up = loss(&model, &x, &y, &w)?;
        set(&mut model, orig - step);
        let down = loss(&model, &x, &y, &w)?;
        set(&mut model, orig);
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads[k].1[i];
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        entries.push(GradCheckEntry {
            name: grads[k].0.clone(),
            index: i,
            analytic,
            numeric,
            rel_err,
        });
    }
    let max_rel_err = entries.iter().map(|e| e.rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { entries, max_rel_err })
}
