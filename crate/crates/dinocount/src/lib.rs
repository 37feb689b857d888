//! Files, datasets and the command line around [`dinocount_core`].
//!
//! - [`fsc147`]: FSC-147-style dataset roots, official-release conversion
//! - [`checkpoint`]: safetensors checkpoints with embedded run config
//! - [`dinov2`]: pretrained backbone weights
//! - [`config`]: TOML configuration with dotted overrides
//! - [`run`]: training run directories
//! - [`evaluate`]: split evaluation and JSON reports
//! - [`count`], [`image_io`]: single-image counting and density images
//! - [`cli`]: the `dinocount` binary

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod count;
pub mod dinov2;
mod error;
pub mod evaluate;
pub mod fsc147;
pub mod image_io;
pub mod run;

pub use dinocount_core;
pub use error::{Error, Result};
