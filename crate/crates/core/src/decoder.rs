//! Convolutional density decoder.
//!
//! Four stages of `conv → ReLU → bilinear ×factor`, then a 1×1 convolution
//! to a single channel (the density regressor) and an output activation.
//! Convolutions use "same" padding, so the upsampling factors alone fix the
//! output size: a `16 × 16` grid becomes a `256 × 256` map with the default
//! factors.

use alloc::format;
use alloc::vec::Vec;

use crate::density::{DensityMap, DensityMode};
use crate::encoder::FeatureGrid;
use crate::nn::{Activation, Conv2d, Param};
use crate::resample::Resampler;
use crate::rng::Rng;
use crate::{Error, Result, Tensor3};

pub const STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub stage_channels: [usize; STAGES],
    pub upsample_factors: [usize; STAGES],
    pub kernel_size: usize,
    pub output_activation: Activation,
    /// The regressor predicts `density_scale × density`; the map is divided
    /// back before it leaves the decoder.
    pub density_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            stage_channels: [256, 128, 64, 32],
            upsample_factors: [2; STAGES],
            kernel_size: 3,
            output_activation: Activation::Relu,
            density_scale: 1.0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) {
            return Err(Error::invalid("decoder stage channels must be positive"));
        }
        if self.upsample_factors.contains(&0) {
            return Err(Error::invalid("upsample factors must be positive"));
        }
        if !(self.density_scale > 0.0 && self.density_scale.is_finite()) {
            return Err(Error::invalid(format!("density scale must be positive, got {}", self.density_scale)));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel size must be odd for same padding, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// Product of the per-stage upsampling factors.
    pub fn total_upsampling(&self) -> usize {
        self.upsample_factors.iter().product()
    }

    /// Raw output shape for an `h × w` grid.
    pub fn output_shape(&self, h: usize, w: usize) -> (usize, usize) {
        let f = self.total_upsampling();
        (h * f, w * f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    config: DecoderConfig,
    in_channels: usize,
    pub stages: Vec<Conv2d>,
    pub regressor: Conv2d,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    /// Input of each stage convolution.
    stage_inputs: Vec<Tensor3>,
    /// Pre-activation output of each stage convolution.
    stage_pre: Vec<Tensor3>,
    regressor_input: Tensor3,
    regressor_pre: Tensor3,
}

/// Gradients in the same order as [`Decoder::params`].
#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub params: Vec<Vec<f64>>,
    pub input: Tensor3,
}

impl Decoder {
    /// Seeded He-initialized decoder for `in_channels`-dimensional features.
    pub fn new(in_channels: usize, config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 {
            return Err(Error::invalid("decoder input channels must be positive"));
        }
        let mut rng = Rng::derive(seed, 0x4445_434f);
        let mut prev = in_channels;
        let mut stages = Vec::with_capacity(STAGES);
        for (i, &ch) in config.stage_channels.iter().enumerate() {
            stages.push(Conv2d::new(
                &format!("decoder.stage{}.conv", i + 1),
                prev,
                ch,
                config.kernel_size,
                &mut rng,
            ));
            prev = ch;
        }
        let regressor = Conv2d::new("decoder.regressor", prev, 1, 1, &mut rng);
        Ok(Self {
            config,
            in_channels,
            stages,
            regressor,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::with_capacity(2 * STAGES + 2);
        for s in &self.stages {
            out.push(&s.weight);
            out.push(&s.bias);
        }
        out.push(&self.regressor.weight);
        out.push(&self.regressor.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::with_capacity(2 * STAGES + 2);
        for s in &mut self.stages {
            out.push(&mut s.weight);
            out.push(&mut s.bias);
        }
        out.push(&mut self.regressor.weight);
        out.push(&mut self.regressor.bias);
        out
    }

    fn check(&self, fused: &FeatureGrid) -> Result<()> {
        if fused.embed_dim() != self.in_channels {
            return Err(Error::shape(
                format!("decoder expects {} channels", self.in_channels),
                fused.embed_dim(),
            ));
        }
        Ok(())
    }

    pub fn decode(&self, fused: &FeatureGrid) -> Result<DensityMap> {
        self.forward(fused).map(|(map, _)| map)
    }

    /// Forward pass that also returns the activations needed by
    /// [`Self::backward`].
    pub fn forward(&self, fused: &FeatureGrid) -> Result<(DensityMap, DecoderTrace)> {
        self.check(fused)?;
        let mut x = fused.values.clone();
        let mut stage_inputs = Vec::with_capacity(STAGES);
        let mut stage_pre = Vec::with_capacity(STAGES);
        for (conv, &factor) in self.stages.iter().zip(&self.config.upsample_factors) {
            let z = conv.forward(&x)?;
            let a = z.map(|v| v.max(0.0));
            let up = upsampler(&a, factor)?.apply(&a)?;
            stage_inputs.push(core::mem::replace(&mut x, up));
            stage_pre.push(z);
        }
        let pre = self.regressor.forward(&x)?;
        let act = self.config.output_activation;
        let (h, w) = (pre.height(), pre.width());
        let inv = 1.0 / self.config.density_scale;
        let values = pre.as_slice().iter().map(|&v| act.apply(v) * inv).collect();
        let map = DensityMap::from_vec(h, w, values, DensityMode::Predicted)?;
        Ok((
            map,
            DecoderTrace {
                stage_inputs,
                stage_pre,
                regressor_input: x,
                regressor_pre: pre,
            },
        ))
    }

    /// Backpropagates `grad_map` (d loss / d output map).
    pub fn backward(&self, trace: &DecoderTrace, grad_map: &[f64]) -> Result<DecoderGrads> {
        let pre = &trace.regressor_pre;
        if grad_map.len() != pre.plane_len() {
            return Err(Error::shape(pre.plane_len(), grad_map.len()));
        }
        let act = self.config.output_activation;
        let inv = 1.0 / self.config.density_scale;
        let g_pre: Vec<f64> = grad_map
            .iter()
            .zip(pre.as_slice())
            .map(|(g, &z)| g * act.derivative(z) * inv)
            .collect();
        let g_pre = Tensor3::from_vec(1, pre.height(), pre.width(), g_pre)?;
        let (mut g, gw_r, gb_r) = self.regressor.backward(&trace.regressor_input, &g_pre)?;

        let mut stage_grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(STAGES);
        for i in (0..STAGES).rev() {
            let z = &trace.stage_pre[i];
            let up = upsampler(z, self.config.upsample_factors[i])?;
            let mut g_a = up.adjoint(&g)?;
            for (ga, &zv) in g_a.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if zv <= 0.0 {
                    *ga = 0.0;
                }
            }
            let (g_in, gw, gb) = self.stages[i].backward(&trace.stage_inputs[i], &g_a)?;
            stage_grads.push((gw, gb));
            g = g_in;
        }
        stage_grads.reverse();
        let mut params = Vec::with_capacity(2 * STAGES + 2);
        for (gw, gb) in stage_grads {
            params.push(gw);
            params.push(gb);
        }
        params.push(gw_r);
        params.push(gb_r);
        Ok(DecoderGrads { params, input: g })
    }
}

fn upsampler(t: &Tensor3, factor: usize) -> Result<Resampler> {
    Resampler::new(
        (t.height(), t.width()),
        (t.height() * factor, t.width() * factor),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::grid_from_tensor;

    fn small_config() -> DecoderConfig {
        DecoderConfig {
            stage_channels: [8, 8, 4, 2],
            ..DecoderConfig::default()
        }
    }

    #[test]
    fn output_is_sixteen_times_grid() {
        let dec = Decoder::new(8, small_config(), 1).unwrap();
        let mut rng = Rng::new(0);
        let grid = grid_from_tensor(Tensor3::from_fn(8, 3, 5, |_, _, _| rng.normal()));
        let map = dec.decode(&grid).unwrap();
        assert_eq!(map.shape(), (48, 80));
        assert!(map.is_nonnegative());
    }

    #[test]
    fn zero_input_zero_map() {
        let dec = Decoder::new(8, small_config(), 1).unwrap();
        let map = dec.decode(&grid_from_tensor(Tensor3::zeros(8, 4, 4))).unwrap();
        assert_eq!(map.count(), 0.0);
    }

    #[test]
    fn channel_mismatch() {
        let dec = Decoder::new(8, small_config(), 1).unwrap();
        assert!(dec.decode(&grid_from_tensor(Tensor3::zeros(6, 4, 4))).is_err());
        assert!(Decoder::new(8, DecoderConfig { kernel_size: 2, ..small_config() }, 0).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        assert_eq!(Decoder::new(8, small_config(), 5).unwrap(), Decoder::new(8, small_config(), 5).unwrap());
        assert_ne!(Decoder::new(8, small_config(), 5).unwrap(), Decoder::new(8, small_config(), 6).unwrap());
    }

    #[test]
    fn param_names_are_hierarchical() {
        let dec = Decoder::new(8, small_config(), 0).unwrap();
        let names: Vec<&str> = dec.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names[0], "decoder.stage1.conv.weight");
        assert_eq!(names[7], "decoder.stage4.conv.bias");
        assert_eq!(names[9], "decoder.regressor.bias");
    }
}
