use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::UpsampleMode;

/// Number of encoder stages; the decoder has one fewer.
pub const STAGES: usize = 5;

/// Architectural hyperparameters of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Observed frames stacked as input channels.
    pub n_in: usize,
    /// Predicted frames emitted by the head (1 gives the single-frame variant).
    pub m_out: usize,
    /// Encoder channel width per stage, shallow to deep.
    pub stage_channels: Vec<usize>,
    /// Square input side in pixels; must be divisible by 16.
    pub input_size: usize,
    pub cbam_reduction: usize,
    pub cbam_spatial_kernel: usize,
    #[serde(default)]
    pub upsample_mode: UpsampleMode,
    /// Seed for parameter initialization.
    #[serde(default)]
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::paper()
    }
}

impl ModelConfig {
    /// Full-scale 288x288 network, 9 frames in and 9 out.
    pub fn paper() -> Self {
        ModelConfig {
            n_in: 9,
            m_out: 9,
            stage_channels: vec![256, 128, 64, 32, 32],
            input_size: 288,
            cbam_reduction: 16,
            cbam_spatial_kernel: 7,
            upsample_mode: UpsampleMode::Nearest,
            seed: 0,
        }
    }

    /// Desk-scale network for 64x64 sequences on a CPU.
    pub fn desk() -> Self {
        ModelConfig {
            stage_channels: vec![32, 16, 8, 4, 4],
            input_size: 64,
            cbam_reduction: 4,
            ..ModelConfig::paper()
        }
    }

    /// Smallest useful network, for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            n_in: 2,
            m_out: 2,
            stage_channels: vec![8, 4, 2, 1, 1],
            input_size: 16,
            cbam_reduction: 1,
            cbam_spatial_kernel: 7,
            upsample_mode: UpsampleMode::Nearest,
            seed: 0,
        }
    }

    pub fn with_m_out(mut self, m_out: usize) -> Self {
        self.m_out = m_out;
        self
    }

    /// Spatial side of the feature map at 1-based `stage`.
    pub fn stage_size(&self, stage: usize) -> usize {
        self.input_size >> (stage - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_in == 0 || self.m_out == 0 {
            return fail("n_in and m_out must be at least 1".into());
        }
        if self.stage_channels.len() != STAGES {
            return fail(format!(
                "stage_channels must have {STAGES} entries, got {}",
                self.stage_channels.len()
            ));
        }
        let ch = &self.stage_channels;
        if ch[0] == 0 {
            return fail("stage channels must be positive".into());
        }
        for i in 1..STAGES - 1 {
            if ch[i - 1] != 2 * ch[i] {
                return fail(format!(
                    "stage {} must have half the channels of stage {} ({} vs {})",
                    i + 1,
                    i,
                    ch[i],
                    ch[i - 1]
                ));
            }
        }
        if ch[STAGES - 1] != ch[STAGES - 2] {
            return fail(format!(
                "stage 5 must keep stage 4's width ({} vs {})",
                ch[4], ch[3]
            ));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(16) {
            return fail(format!(
                "input_size must be a positive multiple of 16, got {}",
                self.input_size
            ));
        }
        if self.cbam_reduction == 0 {
            return fail("cbam_reduction must be at least 1".into());
        }
        if let Some(&c) = ch.iter().find(|&&c| c < self.cbam_reduction) {
            return fail(format!(
                "attention reduction {} exceeds stage width {c}",
                self.cbam_reduction
            ));
        }
        if self.cbam_spatial_kernel.is_multiple_of(2) {
            return fail("cbam_spatial_kernel must be odd".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for cfg in [ModelConfig::paper(), ModelConfig::desk(), ModelConfig::tiny()] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn schedule_rules_are_enforced() {
        let mut cfg = ModelConfig::paper();
        cfg.stage_channels = vec![256, 128, 64, 32];
        assert!(cfg.validate().is_err());
        cfg.stage_channels = vec![256, 128, 64, 64, 64];
        assert!(cfg.validate().is_err());
        cfg.stage_channels = vec![256, 128, 64, 32, 16];
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk();
        cfg.input_size = 72;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk();
        cfg.cbam_reduction = 16;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn stage_sizes_halve() {
        let cfg = ModelConfig::paper();
        let sizes: Vec<_> = (1..=5).map(|s| cfg.stage_size(s)).collect();
        assert_eq!(sizes, vec![288, 144, 72, 36, 18]);
    }
}
