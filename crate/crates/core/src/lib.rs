//! Exemplar-free, class-agnostic object counting by density-map regression.
//!
//! An image is encoded into a grid of patch features by a self-supervised
//! vision transformer (or a seeded linear stand-in), a 2D positional
//! embedding is added to the grid, and a four-stage convolutional decoder
//! upsamples the result into a single-channel density map. The object count
//! is the spatial sum of that map.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation:
//! file formats, image decoding and the command line live in the `dinocount`
//! companion crate.
//!
//! - [`density`]: density targets and mass-preserving resampling
//! - [`augment`]: annotation-consistent geometric augmentation
//! - [`synth`]: procedural counting scenes with exact annotations
//! - [`encoder`]: patch feature extraction ([`encoder::StubEncoder`], [`encoder::vit`])
//! - [`fusion`]: positional embeddings and additive fusion
//! - [`decoder`]: convolution + bilinear upsampling decoder with backprop
//! - [`model`]: the composed counter
//! - [`train`]: AdamW training with validation-MAE checkpoint selection
//! - [`inference`]: sliding-window tiled inference
//! - [`eval`]: MAE/RMSE reports and exclusion ablations

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations, rust_2018_idioms)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod augment;
pub mod decoder;
pub mod density;
pub mod encoder;
mod error;
pub mod eval;
pub mod fusion;
pub mod inference;
pub mod model;
pub mod nn;
pub mod optim;
mod par;
pub mod resample;
pub mod rng;
pub mod sample;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use sample::{ImageSample, Point, Split};
pub use tensor::Tensor3;
