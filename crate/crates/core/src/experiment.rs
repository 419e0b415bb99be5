//! TOML experiment files: a model preset or explicit architecture plus
//! training settings.
//!
//! ```toml
//! preset = "desk"
//! mode = "mmi"
//!
//! [train]
//! learning_rate = 1e-3
//! batch_size = 8
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    #[default]
    Desk,
    Tiny,
}

impl Preset {
    pub fn config(self) -> ModelConfig {
        match self {
            Preset::Paper => ModelConfig::paper(),
            Preset::Desk => ModelConfig::desk(),
            Preset::Tiny => ModelConfig::tiny(),
        }
    }
}

/// Multi-frame output, or a single-frame model meant for recurrent rollout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    #[default]
    Mmi,
    Msi,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub preset: Option<Preset>,
    pub mode: Option<OutputMode>,
    /// Overrides the preset entirely when present.
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Model architecture after applying the preset and output mode.
    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = self
            .model
            .clone()
            .unwrap_or_else(|| self.preset.unwrap_or_default().config());
        if self.mode == Some(OutputMode::Msi) {
            cfg.m_out = 1;
        }
        cfg
    }
}
