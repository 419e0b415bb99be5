use log::warn;

use super::{NormalizedSequence, RadarSequence, RainField};
use crate::error::{Error, Result};

/// Rain rates above this are clipped before training and evaluation (mm/h).
pub const RAIN_CAP: f64 = 19.0;
const LOG_SCALE: f64 = 1.5;
/// Frame spacing assumed when none is recorded (five minutes).
pub const DEFAULT_INTERVAL_SECONDS: u32 = 300;
/// Normalized value of 0 mm/h.
pub const NORM_MIN: f64 = -1.0;
/// Normalized value of [`RAIN_CAP`]: `ln(20) / 1.5 - 1`.
pub const NORM_MAX: f64 = 0.997_154_849_035_994;

pub fn cap_rainfall(field: &RainField) -> Result<RainField> {
    let mut out = field.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::DataIntegrity(format!(
                "cell {i} has invalid rain rate {v}"
            )));
        }
        *v = v.min(RAIN_CAP);
    }
    Ok(out)
}

pub fn cap_sequence(seq: &RadarSequence) -> Result<RadarSequence> {
    let frames = seq.frames.iter().map(cap_rainfall).collect::<Result<Vec<_>>>()?;
    Ok(RadarSequence {
        id: seq.id.clone(),
        interval_seconds: seq.interval_seconds,
        frames,
    })
}

/// `ln(x + 1) / 1.5 - 1`.
pub fn normalize_value(x: f64) -> f64 {
    x.ln_1p() / LOG_SCALE - 1.0
}

/// `exp(1.5 (y + 1)) - 1`, the exact inverse of [`normalize_value`].
pub fn denormalize_value(y: f64) -> f64 {
    (LOG_SCALE * (y + 1.0)).exp_m1()
}

pub fn normalize(seq: &RadarSequence) -> Result<NormalizedSequence> {
    seq.validate()?;
    let mut data = Vec::with_capacity(seq.len() * seq.height() * seq.width());
    for (k, f) in seq.frames.iter().enumerate() {
        for (i, &x) in f.data.iter().enumerate() {
            if !x.is_finite() || !(0.0..=RAIN_CAP).contains(&x) {
                return Err(Error::DataIntegrity(format!(
                    "sequence {} frame {k} cell {i}: {x} mm/h is outside [0, {RAIN_CAP}]; cap first",
                    seq.id
                )));
            }
            data.push(normalize_value(x));
        }
    }
    Ok(NormalizedSequence {
        id: seq.id.clone(),
        frames: seq.len(),
        height: seq.height(),
        width: seq.width(),
        data,
    })
}

/// Counts of values that fell outside the normalized range and were clamped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DenormStats {
    pub clamped_high: usize,
    pub clamped_low: usize,
}

/// Maps back to mm/h. Values outside `[NORM_MIN, NORM_MAX]` (model output
/// can overshoot) are clamped to `[0, RAIN_CAP]` and counted.
pub fn denormalize(norm: &NormalizedSequence) -> Result<(RadarSequence, DenormStats)> {
    let mut stats = DenormStats::default();
    let n = norm.height * norm.width;
    if norm.data.len() != norm.frames * n {
        return Err(Error::Shape(format!("normalized sequence {} payload size", norm.id)));
    }
    let mut frames = Vec::with_capacity(norm.frames);
    for k in 0..norm.frames {
        let mut data = Vec::with_capacity(n);
        for &y in norm.frame(k) {
            if !y.is_finite() {
                return Err(Error::DataIntegrity(format!("non-finite value in {}", norm.id)));
            }
            let x = if y > NORM_MAX {
                stats.clamped_high += 1;
                RAIN_CAP
            } else if y < NORM_MIN {
                stats.clamped_low += 1;
                0.0
            } else {
                denormalize_value(y).clamp(0.0, RAIN_CAP)
            };
            data.push(x);
        }
        frames.push(RainField::new(norm.height, norm.width, data)?);
    }
    if stats.clamped_high > 0 {
        warn!(
            "{}: {} values above the normalized range clamped to {RAIN_CAP} mm/h",
            norm.id, stats.clamped_high
        );
    }
    let seq = RadarSequence::new(norm.id.clone(), DEFAULT_INTERVAL_SECONDS, frames)?;
    Ok((seq, stats))
}

/// First `n` frames as input and the following `m` as target, both capped
/// and normalized.
pub fn window(seq: &RadarSequence, n: usize, m: usize) -> Result<(NormalizedSequence, NormalizedSequence)> {
    window_at(seq, 0, n, m)
}

/// Like [`window`] but starting at frame `start`.
pub fn window_at(
    seq: &RadarSequence,
    start: usize,
    n: usize,
    m: usize,
) -> Result<(NormalizedSequence, NormalizedSequence)> {
    let required = start + n + m;
    if n == 0 || m == 0 || seq.len() < required {
        return Err(Error::SequenceTooShort {
            required,
            actual: seq.len(),
        });
    }
    let input = normalize(&cap_sequence(&seq.slice(start, n)?)?)?;
    let target = normalize(&cap_sequence(&seq.slice(start + n, m)?)?)?;
    Ok((input, target))
}
