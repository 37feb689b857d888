//! Whole-image counting from files.

use std::path::Path;

use dinocount_core::density::DensityMap;
use dinocount_core::inference::{infer_tiled, InferenceConfig, WindowPlan};

use crate::checkpoint::load_model;
use crate::image_io::load_rgb;
use crate::Result;

#[derive(Debug, Clone)]
pub struct CountResult {
    pub count: f64,
    pub density: DensityMap,
    pub plan: WindowPlan,
}

/// Counts objects in an image with a checkpoint. `inference` defaults to
/// the checkpoint's own inference settings.
pub fn count_image(image: &Path, checkpoint: &Path, inference: Option<&InferenceConfig>) -> Result<CountResult> {
    let pixels = load_rgb(image)?;
    let (model, ck) = load_model(checkpoint)?;
    let cfg = match inference {
        Some(c) => *c,
        None => ck.meta.config.inference_config()?,
    };
    let pred = infer_tiled(&pixels, &model, &cfg)?;
    Ok(CountResult {
        count: pred.count,
        density: pred.density,
        plan: pred.plan,
    })
}
