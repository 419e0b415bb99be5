use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::loss::WeightSchedule;
use crate::radar::{cap_sequence, window_at, RadarSequence};
use crate::tensor::Tensor;

/// One `(input, target, pixel weights)` training window.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub source: String,
    pub start: usize,
    pub x: Tensor<f32>,
    pub y: Tensor<f32>,
    /// Per-pixel loss weights taken from the capped physical target.
    pub w: Tensor<f32>,
}

/// Windows cut from a set of sequences. Reads are counted separately for
/// gradient computation and evaluation so callers can audit that a held-out
/// set never contributed to an update.
#[derive(Debug, Default)]
pub struct WindowDataset {
    samples: Vec<Sample>,
    gradient_reads: AtomicUsize,
    eval_reads: AtomicUsize,
}

impl WindowDataset {
    /// Cuts `n + m` frame windows. With `stride = None` each sequence gives
    /// its first window only; otherwise windows start every `stride` frames.
    pub fn from_sequences(
        seqs: &[RadarSequence],
        n: usize,
        m: usize,
        stride: Option<usize>,
        weights: &WeightSchedule,
    ) -> Result<Self> {
        weights.validate()?;
        if stride == Some(0) {
            return Err(Error::Config("window stride must be positive".into()));
        }
        let mut samples = Vec::new();
        for seq in seqs {
            let span = n + m;
            if seq.len() < span {
                return Err(Error::SequenceTooShort {
                    required: span,
                    actual: seq.len(),
                });
            }
            let starts: Vec<usize> = match stride {
                None => vec![0],
                Some(s) => (0..=seq.len() - span).step_by(s).collect(),
            };
            for start in starts {
                let (x, y) = window_at(seq, start, n, m)?;
                let target = cap_sequence(&seq.slice(start + n, m)?)?;
                let w: Vec<f32> = target
                    .frames
                    .iter()
                    .flat_map(|f| weights.weights_for(&f.data))
                    .map(|v| v as f32)
                    .collect();
                samples.push(Sample {
                    source: seq.id.clone(),
                    start,
                    x: x.to_tensor(),
                    y: y.to_tensor(),
                    w: Tensor::from_vec(&[m, seq.height(), seq.width()], w),
                });
            }
        }
        Ok(WindowDataset {
            samples,
            ..Default::default()
        })
    }

    pub fn from_samples(samples: Vec<Sample>) -> Self {
        WindowDataset {
            samples,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample used to compute a parameter update.
    pub fn gradient_sample(&self, i: usize) -> &Sample {
        self.gradient_reads.fetch_add(1, Ordering::Relaxed);
        &self.samples[i]
    }

    /// Sample used for scoring only.
    pub fn eval_sample(&self, i: usize) -> &Sample {
        self.eval_reads.fetch_add(1, Ordering::Relaxed);
        &self.samples[i]
    }

    /// Copies of every sample, without counting a read.
    pub fn peek_all(&self) -> Vec<Sample> {
        self.samples.clone()
    }

    /// Uncounted access for shape checks.
    pub(crate) fn peek(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn gradient_reads(&self) -> usize {
        self.gradient_reads.load(Ordering::Relaxed)
    }

    pub fn eval_reads(&self) -> usize {
        self.eval_reads.load(Ordering::Relaxed)
    }
}
