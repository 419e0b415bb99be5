//! Forecast verification: contingency tables, CSI, HSS and balanced errors,
//! pooled over all pixels and frames and optionally per lead time.

mod plot;
mod report;

pub use plot::{write_curves, CURVE_METRICS};
pub use report::{render_table, write_report};

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{b_mae, b_mse, WeightSchedule};
use crate::radar::{RadarSequence, RainField};

/// Thresholds in mm/h used when none are given.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.5, 2.0, 5.0, 10.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ContingencyTable {
    type Output = ContingencyTable;

    fn add(self, o: ContingencyTable) -> ContingencyTable {
        ContingencyTable {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ContingencyTable {
    fn add_assign(&mut self, o: ContingencyTable) {
        *self = *self + o;
    }
}

/// Counts events (`value >= threshold`) over paired cells.
pub fn contingency_cells(pred: &[f64], obs: &[f64], threshold: f64) -> Result<ContingencyTable> {
    if pred.len() != obs.len() {
        return Err(Error::Shape(format!(
            "prediction has {} cells, observation {}",
            pred.len(),
            obs.len()
        )));
    }
    let mut t = ContingencyTable::default();
    for (&p, &o) in pred.iter().zip(obs) {
        match (p >= threshold, o >= threshold) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
            (false, false) => t.tn += 1,
        }
    }
    Ok(t)
}

pub fn contingency(pred: &RainField, obs: &RainField, threshold: f64) -> Result<ContingencyTable> {
    if (pred.height, pred.width) != (obs.height, obs.width) {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, observation {}x{}",
            pred.height, pred.width, obs.height, obs.width
        )));
    }
    contingency_cells(&pred.data, &obs.data, threshold)
}

/// Critical success index `tp / (tp + fp + fn)`; `None` when no event was
/// forecast or observed.
pub fn csi(t: &ContingencyTable) -> Option<f64> {
    let denom = t.tp + t.fp + t.fn_;
    (denom > 0).then(|| t.tp as f64 / denom as f64)
}

/// Heidke skill score; `None` when the denominator vanishes.
pub fn hss(t: &ContingencyTable) -> Option<f64> {
    let (tp, fp, fn_, tn) = (t.tp as f64, t.fp as f64, t.fn_ as f64, t.tn as f64);
    let denom = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    (denom > 0.0).then(|| 2.0 * (tp * tn - fn_ * fp) / denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScores {
    pub threshold: f64,
    pub table: ContingencyTable,
    /// Scores of the pooled table.
    pub csi: Option<f64>,
    pub hss: Option<f64>,
    /// Mean of per-frame scores over frames where the score is defined.
    pub csi_frame_mean: Option<f64>,
    pub hss_frame_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadScores {
    /// 1-based prediction step.
    pub lead: usize,
    pub per_threshold: Vec<ThresholdScores>,
    pub b_mse: f64,
    pub b_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    /// Which CSI/HSS the headline numbers use.
    pub pooling: String,
    pub sequences: usize,
    pub frames_per_sequence: usize,
    pub per_threshold: Vec<ThresholdScores>,
    pub b_mse: f64,
    pub b_mae: f64,
    pub per_lead_time: Option<Vec<LeadScores>>,
}

impl SkillReport {
    pub fn threshold(&self, threshold: f64) -> Option<&ThresholdScores> {
        self.per_threshold.iter().find(|s| s.threshold == threshold)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    pub weights: WeightSchedule,
    pub per_lead_time: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            weights: WeightSchedule::default(),
            per_lead_time: false,
        }
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores a set of `(pred, obs)` frame pairs.
fn score_frames(pairs: &[(&RainField, &RainField)], opts: &EvalOptions) -> Result<(Vec<ThresholdScores>, f64, f64)> {
    let mut per_threshold = Vec::with_capacity(opts.thresholds.len());
    for &thr in &opts.thresholds {
        let tables = pairs
            .iter()
            .map(|(p, o)| contingency(p, o, thr))
            .collect::<Result<Vec<_>>>()?;
        let pooled = tables.iter().copied().fold(ContingencyTable::default(), Add::add);
        per_threshold.push(ThresholdScores {
            threshold: thr,
            table: pooled,
            csi: csi(&pooled),
            hss: hss(&pooled),
            csi_frame_mean: mean_defined(tables.iter().map(csi)),
            hss_frame_mean: mean_defined(tables.iter().map(hss)),
        });
    }
    // Every frame has the same pixel count, so the mean of per-frame means is
    // the pooled mean.
    let mut mse = 0.0;
    let mut mae = 0.0;
    for (p, o) in pairs {
        let w = opts.weights.weights_for(&o.data);
        mse += b_mse(&p.data, &o.data, &w)?;
        mae += b_mae(&p.data, &o.data, &w)?;
    }
    let n = pairs.len() as f64;
    Ok((per_threshold, mse / n, mae / n))
}

/// Evaluates physical-space (mm/h) predictions against matching observations.
pub fn evaluate(preds: &[RadarSequence], obs: &[RadarSequence], opts: &EvalOptions) -> Result<SkillReport> {
    opts.weights.validate()?;
    if preds.len() != obs.len() {
        return Err(Error::Shape(format!(
            "{} predicted sequences but {} observed",
            preds.len(),
            obs.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Shape("nothing to evaluate".into()));
    }
    let frames = preds[0].len();
    for (p, o) in preds.iter().zip(obs) {
        if p.len() != frames || o.len() != frames {
            return Err(Error::Shape(format!(
                "sequence {}: {} predicted vs {} observed frames (expected {frames})",
                p.id,
                p.len(),
                o.len()
            )));
        }
    }
    let pairs: Vec<(&RainField, &RainField)> = preds
        .iter()
        .zip(obs)
        .flat_map(|(p, o)| p.frames.iter().zip(&o.frames))
        .collect();
    let (per_threshold, b_mse, b_mae) = score_frames(&pairs, opts)?;
    let per_lead_time = if opts.per_lead_time {
        let mut leads = Vec::with_capacity(frames);
        for k in 0..frames {
            let pairs: Vec<_> = preds
                .iter()
                .zip(obs)
                .map(|(p, o)| (&p.frames[k], &o.frames[k]))
                .collect();
            let (per_threshold, b_mse, b_mae) = score_frames(&pairs, opts)?;
            leads.push(LeadScores {
                lead: k + 1,
                per_threshold,
                b_mse,
                b_mae,
            });
        }
        Some(leads)
    } else {
        None
    };
    Ok(SkillReport {
        pooling: "pooled".to_string(),
        sequences: preds.len(),
        frames_per_sequence: frames,
        per_threshold,
        b_mse,
        b_mae,
        per_lead_time,
    })
}
