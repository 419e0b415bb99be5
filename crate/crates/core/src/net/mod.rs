//! The nowcasting network and its checkpoint format.

mod blocks;
mod checkpoint;
mod config;
mod model;

pub use blocks::{Cbam, CbamCache, Ndm, Srm, SrmCache, UpBlock};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, STAGES};
pub use model::{downsample, DecoderStage, EncoderStage, ForwardCache, Mminr};
