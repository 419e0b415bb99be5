//! Precipitation nowcasting from radar rainfall sequences with a
//! multi-input multi-output encoder/decoder network.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod loss;
pub mod net;
pub mod nn;
pub mod radar;
pub mod tensor;
pub mod training;
pub mod verification;

pub use error::{Error, Result};
