//! Mini-batch Adam training with validation-based early stopping.

mod adam;
mod dataset;
mod gradcheck;

pub use adam::{Adam, AdamConfig};
pub use dataset::{Sample, WindowDataset};
pub use gradcheck::{gradient_check, GradCheckEntry, GradCheckReport};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{loss_and_grad, LossKind, WeightSchedule};
use crate::net::{Mminr, ModelConfig};
use crate::nn::Params;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Seed for batch shuffling.
    pub seed: u64,
    pub loss: LossKind,
    pub weights: WeightSchedule,
    /// `None` takes one window per sequence; otherwise windows start every
    /// `window_stride` frames.
    pub window_stride: Option<usize>,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            loss: LossKind::BMae,
            weights: WeightSchedule::default(),
            window_stride: None,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Tracks the best validation loss and signals a stop after `patience`
/// epochs without strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if val_loss >= b => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Wait
                }
            }
            _ => {
                self.best = Some((epoch, val_loss));
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }

    /// `(epoch, loss)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_bmae: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Mminr<f32>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochRecord>,
    /// Mean batch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub stopped_early: bool,
}

fn check_loss(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Training(format!("{what} became {value}")))
    }
}

fn check_dataset(ds: &WindowDataset, model: &ModelConfig, name: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Training(format!("{name} set is empty")));
    }
    for i in 0..ds.len() {
        let s = ds.peek(i);
        let (c, h, w) = s.x.chw();
        if c != model.n_in || s.y.chw().0 != model.m_out || h != model.input_size || w != model.input_size {
            return Err(Error::Shape(format!(
                "{name} window from {} is {:?} -> {:?}, model wants ({}, {s2}, {s2}) -> {}",
                s.source,
                s.x.shape(),
                s.y.shape(),
                model.n_in,
                model.m_out,
                s2 = model.input_size
            )));
        }
    }
    Ok(())
}

/// Loss and accumulated gradient of one mini-batch, averaged over samples.
fn batch_step(
    model: &Mminr<f32>,
    samples: &[&Sample],
    kind: LossKind,
) -> Result<(f64, Mminr<f32>)> {
    let per_sample: Vec<(f64, Mminr<f32>)> = samples
        .par_iter()
        .map(|s| {
            let (pred, cache) = model.forward_train(&s.x)?;
            let (loss, dy) = loss_and_grad(kind, &pred, &s.y, &s.w)?;
            let mut grad = model.zeros_like();
            model.backward(&cache, &dy, &mut grad);
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let inv = 1.0 / samples.len() as f32;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        let mut src = g.named_params().into_iter();
        grad.visit_mut("", &mut |_, t: &mut Tensor<f32>| {
            t.add_assign(src.next().expect("same layout").1);
        });
    }
    grad.visit_mut("", &mut |_, t| t.scale(inv));
    Ok((loss / samples.len() as f64, grad))
}

/// Mean weighted absolute error in normalized space over a dataset.
pub fn validation_bmae(model: &Mminr<f32>, ds: &WindowDataset) -> Result<f64> {
    let losses: Vec<f64> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let s = ds.eval_sample(i);
            let pred = model.forward(&s.x)?;
            Ok(loss_and_grad(LossKind::BMae, &pred, &s.y, &s.w)?.0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains a freshly initialized network. Only `train` feeds gradients;
/// `val` is read for early stopping and best-epoch selection.
pub fn train(
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    train: &WindowDataset,
    val: &WindowDataset,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dataset(train, model_config, "training")?;
    check_dataset(val, model_config, "validation")?;
    let mut model = Mminr::<f32>::new(model_config.clone())?;
    let mut opt = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut best_model = model.clone();
    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;
    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|cap| step_losses.len() >= cap) {
                break;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train.gradient_sample(i)).collect();
            let (loss, grad) = batch_step(&model, &batch, cfg.loss)?;
            check_loss(loss, "training loss")?;
            opt.update(&mut model, &grad);
            step_losses.push(loss);
            sum += loss * chunk.len() as f64;
            count += chunk.len();
        }
        if count == 0 {
            break;
        }
        let val_bmae = check_loss(validation_bmae(&model, val)?, "validation loss")?;
        let record = EpochRecord {
            epoch,
            train_loss: sum / count as f64,
            val_bmae,
        };
        info!(
            "epoch {epoch}: train {:.6} val B-MAE {:.6}",
            record.train_loss, record.val_bmae
        );
        history.push(record);
        match stopper.observe(epoch, val_bmae) {
            StopDecision::Improved => best_model = model.clone(),
            StopDecision::Wait => {}
            StopDecision::Stop => {
                stopped_early = true;
                break 'epochs;
            }
        }
    }
    let (best_epoch, best_val) = stopper
        .best()
        .ok_or_else(|| Error::Training("no epoch completed".into()))?;
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        best_val,
        history,
        step_losses,
        stopped_early,
    })
}

/// `epoch,train_loss,val_bmae` CSV.
pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_bmae\n");
    for r in history {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_bmae);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
