//! Command-line front end: `synth`, `train`, `predict`, `evaluate`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{Experiment, OutputMode, Preset};
use crate::inference::{forecast_sequence, Strategy};
use crate::loss::LossKind;
use crate::net::{load_checkpoint, save_checkpoint, CheckpointMeta, Mminr};
use crate::radar::{generate_synthetic, list_archives, read_archive, write_archive, RadarSequence, SyntheticConfig};
use crate::training::{train, write_history, WindowDataset};
use crate::verification::{evaluate, render_table, write_curves, write_report, EvalOptions, DEFAULT_THRESHOLDS};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "mminr", version, about = "Radar precipitation nowcasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic radar sequences as archives.
    Synth(SynthArgs),
    /// Train a network and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Forecast from archived sequences.
    Predict(PredictArgs),
    /// Score forecasts against observations.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output root; each sequence goes into its own subdirectory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 18)]
    pub frames: usize,
    /// Square side in pixels; at least 32 and a multiple of 16.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub cells: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise_rate: f64,
    /// Advection in pixels per frame, as `dx,dy`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1.0, 0.5])]
    pub velocity: Vec<f64>,
    /// Sequence `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Root of training archives.
    #[arg(long)]
    pub train: PathBuf,
    /// Root of validation archives.
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML experiment file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum)]
    pub mode: Option<OutputMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub window_stride: Option<usize>,
    #[arg(long, value_enum)]
    pub loss: Option<LossKind>,
    /// Seeds both parameter initialization and batch order.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// One archive or a root containing archives.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Strategy::Mmi)]
    pub strategy: Strategy,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Lead times to produce; defaults to the model's output count (9 for
    /// single-frame and persistence forecasts).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Input frames for persistence, which has no model to ask.
    #[arg(long, default_value_t = 9)]
    pub n_in: usize,
    /// First input frame within each sequence.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Clip fed-back frames to the normalized data range.
    #[arg(long)]
    pub clamp_feedback: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Root (or single archive) of forecasts.
    #[arg(long)]
    pub pred: PathBuf,
    /// Root (or single archive) of observations, matched by sequence id.
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Index of the observed frame matching the first forecast frame.
    #[arg(long, default_value_t = 9)]
    pub obs_offset: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub per_lead_time: bool,
    /// Also write per-lead-time curves (implies --per-lead-time).
    #[arg(long)]
    pub plot: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Predict(a) => predict_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
    }
}

fn read_sequences(path: &Path) -> Result<Vec<RadarSequence>> {
    let dirs = if path.join(crate::radar::MANIFEST_FILE).is_file() {
        vec![path.to_path_buf()]
    } else {
        list_archives(path)?
    };
    if dirs.is_empty() {
        return Err(Error::Config(format!("no archives under {}", path.display())));
    }
    dirs.iter().map(|d| read_archive(d)).collect()
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.size < 32 || !a.size.is_multiple_of(16) {
        return Err(Error::Config(format!(
            "size {} must be at least 32 and a multiple of 16",
            a.size
        )));
    }
    for i in 0..a.count {
        let cfg = SyntheticConfig {
            num_cells: a.cells,
            noise_rate: a.noise_rate,
            advection_velocity: (a.velocity[0], a.velocity[1]),
            seed: a.seed + i as u64,
            ..SyntheticConfig::default()
        };
        let seq = generate_synthetic(&cfg, a.frames, a.size)?;
        write_archive(&seq, &a.out.join(&seq.id))?;
    }
    info!("wrote {} sequences to {}", a.count, a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_val_bmae: f64,
    epochs_run: usize,
    steps: usize,
    stopped_early: bool,
    train_windows: usize,
    val_windows: usize,
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut exp = match &a.config {
        Some(p) => Experiment::load(p)?,
        None => Experiment::default(),
    };
    if a.preset.is_some() {
        exp.preset = a.preset;
        exp.model = None;
    }
    if a.mode.is_some() {
        exp.mode = a.mode;
    }
    let t = &mut exp.train;
    if let Some(v) = a.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if a.max_steps.is_some() {
        t.max_steps = a.max_steps;
    }
    if a.window_stride.is_some() {
        t.window_stride = a.window_stride;
    }
    if let Some(v) = a.loss {
        t.loss = v;
    }
    let mut model_cfg = exp.model_config();
    if let Some(seed) = a.seed {
        exp.train.seed = seed;
        model_cfg.seed = seed;
    }
    let train_seqs = read_sequences(&a.train)?;
    let val_seqs = read_sequences(&a.val)?;
    // The network is fully convolutional: follow the data resolution.
    model_cfg.input_size = train_seqs[0].height();
    model_cfg.validate()?;
    let (n, m) = (model_cfg.n_in, model_cfg.m_out);
    let tc = &exp.train;
    let train_ds = WindowDataset::from_sequences(&train_seqs, n, m, tc.window_stride, &tc.weights)?;
    let val_ds = WindowDataset::from_sequences(&val_seqs, n, m, tc.window_stride, &tc.weights)?;
    let outcome = train(&model_cfg, tc, &train_ds, &val_ds)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_checkpoint(
        &outcome.model,
        &CheckpointMeta {
            epoch: Some(outcome.best_epoch),
            val_loss: Some(outcome.best_val),
        },
        &a.out.join(CHECKPOINT_FILE),
    )?;
    write_history(&outcome.history, &a.out.join(HISTORY_FILE))?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_val_bmae: outcome.best_val,
        epochs_run: outcome.history.len(),
        steps: outcome.step_losses.len(),
        stopped_early: outcome.stopped_early,
        train_windows: train_ds.len(),
        val_windows: val_ds.len(),
    };
    let path = a.out.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    info!(
        "best epoch {} (val B-MAE {:.6}); checkpoint in {}",
        outcome.best_epoch,
        outcome.best_val,
        a.out.display()
    );
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let model: Option<Mminr<f32>> = match (&a.checkpoint, a.strategy) {
        (Some(p), _) => Some(load_checkpoint(p)?.0),
        (None, Strategy::Persistence) => None,
        (None, s) => return Err(Error::Config(format!("strategy {s:?} needs --checkpoint"))),
    };
    let horizon = a.horizon.unwrap_or(match (&model, a.strategy) {
        (Some(m), Strategy::Mmi) => m.config().m_out,
        _ => 9,
    });
    let seqs = read_sequences(&a.input)?;
    for seq in &seqs {
        let fc = forecast_sequence(
            a.strategy,
            model.as_ref(),
            a.n_in,
            seq,
            a.start,
            horizon,
            a.clamp_feedback,
        )?;
        write_archive(&fc, &a.out.join(&fc.id))?;
    }
    info!("wrote {} forecasts to {}", seqs.len(), a.out.display());
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let preds = read_sequences(&a.pred)?;
    let obs: BTreeMap<String, RadarSequence> = read_sequences(&a.obs)?
        .into_iter()
        .map(|s| (s.id.clone(), s))
        .collect();
    let mut matched = Vec::with_capacity(preds.len());
    for p in &preds {
        let o = obs
            .get(&p.id)
            .ok_or_else(|| Error::Config(format!("no observation for forecast {}", p.id)))?;
        if o.len() < a.obs_offset + p.len() {
            return Err(Error::SequenceTooShort {
                required: a.obs_offset + p.len(),
                actual: o.len(),
            });
        }
        matched.push(o.slice(a.obs_offset, p.len())?);
    }
    let opts = EvalOptions {
        thresholds: a.thresholds.clone(),
        per_lead_time: a.per_lead_time || a.plot,
        ..EvalOptions::default()
    };
    let report = evaluate(&preds, &matched, &opts)?;
    write_report(&report, &a.out)?;
    if a.plot {
        write_curves(&report, &a.out.join("curves"))?;
    }
    print!("{}", render_table(&report));
    Ok(())
}
