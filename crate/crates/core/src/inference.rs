//! Forecast strategies: one-shot multi-frame output, recurrent single-step
//! rollout, and the persistence baseline.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Mminr;
use crate::radar::{
    denormalize, normalize, window_at, cap_sequence, NormalizedSequence, RadarSequence, NORM_MAX, NORM_MIN,
};
use crate::tensor::{Scalar, Tensor};

/// Anything that maps `n_in` normalized frames to `m_out` normalized frames.
pub trait SequenceModel<T: Scalar> {
    fn n_in(&self) -> usize;
    fn m_out(&self) -> usize;
    fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Scalar> SequenceModel<T> for Mminr<T> {
    fn n_in(&self) -> usize {
        self.config().n_in
    }

    fn m_out(&self) -> usize {
        self.config().m_out
    }

    fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(x)
    }
}

/// Wraps a model and counts forward calls.
pub struct Counted<'a, M> {
    inner: &'a M,
    calls: AtomicUsize,
}

impl<'a, M> Counted<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Counted {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<T: Scalar, M: SequenceModel<T>> SequenceModel<T> for Counted<'_, M> {
    fn n_in(&self) -> usize {
        self.inner.n_in()
    }

    fn m_out(&self) -> usize {
        self.inner.m_out()
    }

    fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// All lead times from one forward pass.
    #[default]
    Mmi,
    /// Single-frame model fed its own output, one call per lead time.
    MsiRecurrent,
    /// Repeat the last observed frame.
    Persistence,
}

fn check_input<T: Scalar>(x: &Tensor<T>, n_in: usize) -> Result<()> {
    if x.shape().len() != 3 || x.shape()[0] != n_in {
        return Err(Error::Shape(format!(
            "expected ({n_in}, H, W) input, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// One forward call producing all `m_out` lead times.
pub fn predict_mmi<T: Scalar, M: SequenceModel<T> + ?Sized>(model: &M, x: &Tensor<T>) -> Result<Tensor<T>> {
    check_input(x, model.n_in())?;
    model.predict(x)
}

/// Rolls a single-output model forward `horizon` times, sliding its own
/// prediction into the input window. With `clamp_feedback` the fed-back frame
/// is clipped to the normalized data range first; the returned frames are
/// never clipped.
pub fn predict_msi_recurrent<T: Scalar, M: SequenceModel<T> + ?Sized>(
    model: &M,
    x: &Tensor<T>,
    horizon: usize,
    clamp_feedback: bool,
) -> Result<Tensor<T>> {
    if model.m_out() != 1 {
        return Err(Error::Config(format!(
            "recurrent rollout needs a single-output model, this one predicts {} frames",
            model.m_out()
        )));
    }
    let n = model.n_in();
    check_input(x, n)?;
    let (_, h, w) = x.chw();
    let hw = h * w;
    let mut window = x.clone();
    let mut out = Vec::with_capacity(horizon * hw);
    let (lo, hi) = (T::from_f64_lossy(NORM_MIN), T::from_f64_lossy(NORM_MAX));
    for _ in 0..horizon {
        let y = model.predict(&window)?;
        if y.shape() != [1, h, w] {
            return Err(Error::Shape(format!("model returned {:?}", y.shape())));
        }
        out.extend_from_slice(y.data());
        let mut next = Vec::with_capacity(n * hw);
        next.extend_from_slice(&window.data()[hw..]);
        if clamp_feedback {
            next.extend(y.data().iter().map(|&v| v.max(lo).min(hi)));
        } else {
            next.extend_from_slice(y.data());
        }
        window = Tensor::from_vec(&[n, h, w], next);
    }
    Ok(Tensor::from_vec(&[horizon, h, w], out))
}

/// Repeats the last input frame `horizon` times.
pub fn predict_persistence<T: Scalar>(x: &Tensor<T>, horizon: usize) -> Result<Tensor<T>> {
    let (n, h, w) = x.chw();
    if n == 0 {
        return Err(Error::Shape("persistence needs at least one input frame".into()));
    }
    let last = x.channel(n - 1);
    let mut out = Vec::with_capacity(horizon * h * w);
    for _ in 0..horizon {
        out.extend_from_slice(last);
    }
    Ok(Tensor::from_vec(&[horizon, h, w], out))
}

/// Dispatches on `strategy`. `model` may be `None` only for persistence.
pub fn predict<T: Scalar, M: SequenceModel<T> + ?Sized>(
    strategy: Strategy,
    model: Option<&M>,
    x: &Tensor<T>,
    horizon: usize,
    clamp_feedback: bool,
) -> Result<Tensor<T>> {
    let need = || Error::Config(format!("strategy {strategy:?} needs a model"));
    match strategy {
        Strategy::Persistence => predict_persistence(x, horizon),
        Strategy::Mmi => {
            let model = model.ok_or_else(need)?;
            if model.m_out() != horizon {
                return Err(Error::Config(format!(
                    "model predicts {} frames but horizon is {horizon}",
                    model.m_out()
                )));
            }
            predict_mmi(model, x)
        }
        Strategy::MsiRecurrent => predict_msi_recurrent(model.ok_or_else(need)?, x, horizon, clamp_feedback),
    }
}

/// Physical-space forecast from the `n_in` frames starting at `start`: caps,
/// normalizes, predicts and maps back to mm/h.
pub fn forecast_sequence<M: SequenceModel<f32> + ?Sized>(
    strategy: Strategy,
    model: Option<&M>,
    n_in: usize,
    seq: &RadarSequence,
    start: usize,
    horizon: usize,
    clamp_feedback: bool,
) -> Result<RadarSequence> {
    let n = model.map_or(n_in, |m| m.n_in());
    if seq.len() < start + n {
        return Err(Error::SequenceTooShort {
            required: start + n,
            actual: seq.len(),
        });
    }
    let input = normalize(&cap_sequence(&seq.slice(start, n)?)?)?;
    let y = predict(strategy, model, &input.to_tensor::<f32>(), horizon, clamp_feedback)?;
    let norm = NormalizedSequence::from_tensor(seq.id.clone(), &y);
    let (mut out, _) = denormalize(&norm)?;
    out.interval_seconds = seq.interval_seconds;
    Ok(out)
}

/// Normalized `(input, target)` tensors for the window starting at `start`.
pub fn window_tensors<T: Scalar>(
    seq: &RadarSequence,
    start: usize,
    n: usize,
    m: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (x, y) = window_at(seq, start, n, m)?;
    Ok((x.to_tensor(), y.to_tensor()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Predicts the mean of its input frames plus a step counter offset.
    struct MeanModel {
        n: usize,
        m: usize,
    }

    impl SequenceModel<f64> for MeanModel {
        fn n_in(&self) -> usize {
            self.n
        }
        fn m_out(&self) -> usize {
            self.m
        }
        fn predict(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
            let (n, h, w) = x.chw();
            let mut out = vec![0.0; self.m * h * w];
            for k in 0..self.m {
                for i in 0..h * w {
                    out[k * h * w + i] = (0..n).map(|c| x.channel(c)[i]).sum::<f64>() / n as f64 + k as f64;
                }
            }
            Ok(Tensor::from_vec(&[self.m, h, w], out))
        }
    }

    #[test]
    fn recurrent_rollout_slides_the_window() {
        let model = MeanModel { n: 2, m: 1 };
        let x = Tensor::from_vec(&[2, 1, 1], vec![0.0, 1.0]);
        let counted = Counted::new(&model);
        let y = predict_msi_recurrent(&counted, &x, 3, false).unwrap();
        // 0.5, then mean(1, 0.5), then mean(0.5, 0.75)
        assert_eq!(y.data(), &[0.5, 0.75, 0.625]);
        assert_eq!(counted.calls(), 3);
    }

    #[test]
    fn clamped_feedback_does_not_clip_outputs() {
        let model = MeanModel { n: 1, m: 1 };
        let x = Tensor::from_vec(&[1, 1, 1], vec![3.0]);
        let y = predict_msi_recurrent(&model, &x, 2, true).unwrap();
        assert_eq!(y.data()[0], 3.0);
        assert_eq!(y.data()[1], NORM_MAX);
    }

    #[test]
    fn mmi_is_one_call() {
        let model = MeanModel { n: 2, m: 4 };
        let counted = Counted::new(&model);
        let y = predict_mmi(&counted, &Tensor::zeros(&[2, 3, 3])).unwrap();
        assert_eq!(y.shape(), &[4, 3, 3]);
        assert_eq!(counted.calls(), 1);
    }

    #[test]
    fn recurrent_rejects_multi_output_models() {
        let model = MeanModel { n: 2, m: 2 };
        assert!(matches!(
            predict_msi_recurrent(&model, &Tensor::zeros(&[2, 1, 1]), 3, false),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn persistence_repeats_last_frame() {
        let x = Tensor::from_vec(&[2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = predict_persistence(&x, 3).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
    }
}
