//! Radar rain-rate sequences: types, the log transform, windowing, synthetic
//! generation and the on-disk archive format.

mod archive;
mod synthetic;
mod transform;

pub use archive::{list_archives, read_archive, read_archive_dir, write_archive, Manifest, FRAMES_FILE, MANIFEST_FILE};
pub use synthetic::{advect_bilinear, generate_synthetic, SyntheticConfig};
pub use transform::{
    cap_rainfall, cap_sequence, denormalize, normalize, normalize_value, window, window_at,
    denormalize_value, DenormStats, DEFAULT_INTERVAL_SECONDS, NORM_MAX, NORM_MIN, RAIN_CAP,
};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One rain-rate grid in mm/h, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RainField {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// Seconds since the Unix epoch, when known.
    pub timestamp: Option<i64>,
}

impl RainField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "field of {height}x{width} needs {} cells, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(RainField {
            height,
            width,
            data,
            timestamp: None,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        RainField {
            height,
            width,
            data: vec![0.0; height * width],
            timestamp: None,
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Ordered rain fields at a fixed interval.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarSequence {
    pub id: String,
    pub interval_seconds: u32,
    pub frames: Vec<RainField>,
}

impl RadarSequence {
    pub fn new(id: impl Into<String>, interval_seconds: u32, frames: Vec<RainField>) -> Result<Self> {
        let seq = RadarSequence {
            id: id.into(),
            interval_seconds,
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::Shape(format!("sequence {} has no frames", self.id)))?;
        for (i, f) in self.frames.iter().enumerate() {
            if (f.height, f.width) != (first.height, first.width) {
                return Err(Error::Shape(format!(
                    "sequence {}: frame {i} is {}x{}, frame 0 is {}x{}",
                    self.id, f.height, f.width, first.height, first.width
                )));
            }
            if f.data.len() != f.height * f.width {
                return Err(Error::Shape(format!("sequence {}: frame {i} payload size", self.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    /// Frames `[start, start + count)` as a new sequence.
    pub fn slice(&self, start: usize, count: usize) -> Result<RadarSequence> {
        if start + count > self.len() || count == 0 {
            return Err(Error::SequenceTooShort {
                required: start + count.max(1),
                actual: self.len(),
            });
        }
        Ok(RadarSequence {
            id: self.id.clone(),
            interval_seconds: self.interval_seconds,
            frames: self.frames[start..start + count].to_vec(),
        })
    }
}

/// Log-transformed frames stacked as `(frames, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSequence {
    /// Id of the source sequence.
    pub id: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl NormalizedSequence {
    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[self.frames, self.height, self.width],
            self.data.iter().map(|&v| T::from_f64_lossy(v)).collect(),
        )
    }

    pub fn from_tensor<T: Scalar>(id: impl Into<String>, t: &Tensor<T>) -> Self {
        let (frames, height, width) = t.chw();
        NormalizedSequence {
            id: id.into(),
            frames,
            height,
            width,
            data: t.data().iter().map(|v| v.as_f64()).collect(),
        }
    }
}
