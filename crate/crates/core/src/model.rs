//! The composed counter: `decode(pos_embed + encode(image))`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::augment::Normalization;
use crate::decoder::{Decoder, DecoderConfig};
use crate::density::{mass_preserving_resize, DensityMap};
use crate::encoder::{Encoder, EncoderBackend, EncoderConfig, StubEncoder};
use crate::fusion::{fuse, make_pos_embedding, PosScheme, PositionalEmbedding};
use crate::nn::Param;
use crate::{Error, Result, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Side of the square model input, in pixels.
    pub input_side: usize,
    pub encoder: EncoderConfig,
    pub pos_scheme: PosScheme,
    pub decoder: DecoderConfig,
    pub normalization: Normalization,
    /// Seed for every randomly initialized parameter.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_side: 224,
            encoder: EncoderConfig::default(),
            pos_scheme: PosScheme::SinCos2d,
            decoder: DecoderConfig::default(),
            normalization: Normalization::IMAGENET,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// `(h, w)` of the encoder grid for the configured input side.
    pub fn grid_shape(&self) -> Result<(usize, usize)> {
        self.encoder.grid_shape(self.input_side, self.input_side)
    }

    /// Raw decoder output shape before the final resize.
    pub fn raw_output_shape(&self) -> Result<(usize, usize)> {
        let (h, w) = self.grid_shape()?;
        Ok(self.decoder.output_shape(h, w))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.normalization.validate()?;
        self.grid_shape().map(|_| ())
    }
}

/// Gradients aligned with [`CountingModel::trainable_params`].
pub type Gradients = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct CountingModel {
    config: ModelConfig,
    encoder: Encoder,
    pos: PositionalEmbedding,
    decoder: Decoder,
}

impl CountingModel {
    /// Builds a model whose encoder is the seeded stub.
    pub fn new_stub(config: ModelConfig) -> Result<Self> {
        if config.encoder.backend != EncoderBackend::Stub {
            return Err(Error::invalid(
                "pretrained encoders must be loaded and passed to CountingModel::with_encoder",
            ));
        }
        let stub = StubEncoder::new(config.encoder.patch_size, config.encoder.embed_dim(), config.seed);
        Self::with_encoder(config, Encoder::Stub(stub))
    }

    pub fn with_encoder(config: ModelConfig, encoder: Encoder) -> Result<Self> {
        config.validate()?;
        if encoder.embed_dim() != config.encoder.embed_dim() {
            return Err(Error::shape(
                format!("{} variant embed dim {}", config.encoder.variant.as_str(), config.encoder.embed_dim()),
                encoder.embed_dim(),
            ));
        }
        if encoder.patch_size() != config.encoder.patch_size {
            return Err(Error::shape(config.encoder.patch_size, encoder.patch_size()));
        }
        if matches!(encoder, Encoder::Vit(_)) && !config.encoder.frozen {
            return Err(Error::Unsupported(
                "fine-tuning the pretrained transformer; set encoder.frozen = true".into(),
            ));
        }
        let (h, w) = config.grid_shape()?;
        let d = config.encoder.embed_dim();
        let pos = make_pos_embedding(h, w, d, config.pos_scheme, config.seed)?;
        let decoder = Decoder::new(d, config.decoder.clone(), config.seed)?;
        Ok(Self {
            config,
            encoder,
            pos,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn positional(&self) -> &PositionalEmbedding {
        &self.pos
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    fn stub_trainable(&self) -> bool {
        !self.config.encoder.frozen && matches!(self.encoder, Encoder::Stub(_))
    }

    /// Parameters updated by the optimizer, in a fixed order.
    pub fn trainable_params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        if self.pos.is_trainable() {
            out.push(&self.pos.values);
        }
        out.extend(self.decoder.params());
        if self.stub_trainable() {
            if let Encoder::Stub(s) = &self.encoder {
                out.push(&s.projection);
                out.push(&s.bias);
            }
        }
        out
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Param> {
        let stub_trainable = self.stub_trainable();
        let mut out = Vec::new();
        if self.pos.is_trainable() {
            out.push(&mut self.pos.values);
        }
        out.extend(self.decoder.params_mut());
        if stub_trainable {
            if let Encoder::Stub(s) = &mut self.encoder {
                out.push(&mut s.projection);
                out.push(&mut s.bias);
            }
        }
        out
    }

    /// Every stored parameter: positional table, decoder, and stub encoder
    /// weights when the stub backend is used. Pretrained transformer weights
    /// are referenced by path instead.
    pub fn all_params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        out.push(&self.pos.values);
        out.extend(self.decoder.params());
        if let Encoder::Stub(s) = &self.encoder {
            out.push(&s.projection);
            out.push(&s.bias);
        }
        out
    }

    /// Overwrites parameters by name. Every parameter of
    /// [`Self::all_params`] must be present with a matching shape.
    pub fn load_params(&mut self, params: &[Param]) -> Result<()> {
        let find = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let p = params
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| Error::MissingParameter(name.into()))?;
            if p.shape != shape {
                return Err(Error::shape(format!("{name} {shape:?}"), &p.shape));
            }
            Ok(p.value.clone())
        };
        let mut updates: Vec<(String, Vec<f64>)> = Vec::new();
        for p in self.all_params() {
            updates.push((p.name.clone(), find(&p.name, &p.shape)?));
        }
        let mut targets: Vec<&mut Param> = Vec::new();
        targets.push(&mut self.pos.values);
        targets.extend(self.decoder.params_mut());
        if let Encoder::Stub(s) = &mut self.encoder {
            targets.push(&mut s.projection);
            targets.push(&mut s.bias);
        }
        for (t, (_, v)) in targets.into_iter().zip(updates) {
            t.value = v;
        }
        if let Encoder::Stub(s) = &self.encoder {
            // refresh the cached operator norm
            let rebuilt = StubEncoder::from_params(s.projection.clone(), s.bias.clone())?;
            self.encoder = Encoder::Stub(rebuilt);
        }
        Ok(())
    }

    fn check_input(&self, image: &Tensor3) -> Result<()> {
        let side = self.config.input_side;
        if image.shape() != (3, side, side) {
            return Err(Error::shape(format!("input 3x{side}x{side}"), image.shape()));
        }
        Ok(())
    }

    /// Raw decoder output for a normalized `input_side²` image.
    pub fn forward_raw(&self, image: &Tensor3) -> Result<DensityMap> {
        self.check_input(image)?;
        let features = self.encoder.encode(image)?;
        let fused = fuse(&features, &self.pos)?;
        self.decoder.decode(&fused)
    }

    /// Density map at the input resolution; its sum is the count. The raw
    /// decoder output is mass-preservingly resized when its side differs
    /// from the input side.
    pub fn forward(&self, image: &Tensor3) -> Result<DensityMap> {
        let raw = self.forward_raw(image)?;
        mass_preserving_resize(&raw, (image.height(), image.width()))
    }

    /// Mean squared error against a target at the raw output resolution,
    /// and its gradients with respect to [`Self::trainable_params`].
    pub fn loss_and_grads(&self, image: &Tensor3, target: &DensityMap, loss_scale: f64) -> Result<(f64, Gradients, DensityMap)> {
        self.check_input(image)?;
        let features = self.encoder.encode(image)?;
        let fused = fuse(&features, &self.pos)?;
        let (pred, trace) = self.decoder.forward(&fused)?;
        let loss = mse(&pred, target)? * loss_scale;
        let n = pred.values().len() as f64;
        let grad_map: Vec<f64> = pred
            .values()
            .iter()
            .zip(target.values())
            .map(|(p, t)| loss_scale * 2.0 * (p - t) / n)
            .collect();
        let dg = self.decoder.backward(&trace, &grad_map)?;
        let mut grads = Vec::new();
        if self.pos.is_trainable() {
            grads.push(dg.input.as_slice().to_vec());
        }
        grads.extend(dg.params);
        if self.stub_trainable() {
            if let Encoder::Stub(s) = &self.encoder {
                let (gw, gb) = s.backward(image, &dg.input)?;
                grads.push(gw);
                grads.push(gb);
            }
        }
        Ok((loss, grads, pred))
    }
}

/// Pixelwise mean squared error.
pub fn mse(pred: &DensityMap, target: &DensityMap) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(pred.shape(), target.shape()));
    }
    let n = pred.values().len() as f64;
    Ok(pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Variant;
    use crate::rng::Rng;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_side: 16,
            encoder: EncoderConfig {
                patch_size: 4,
                ..EncoderConfig::stub(Variant::Small)
            },
            decoder: DecoderConfig {
                stage_channels: [8, 4, 4, 2],
                upsample_factors: [2, 2, 1, 1],
                ..DecoderConfig::default()
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_image_zero_count() {
        // stub bias feeds a nonzero grid even for a zero image; zero the
        // decoder weights so the composition is exactly zero
        let mut m = CountingModel::new_stub(tiny_config()).unwrap();
        for p in m.decoder.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = m.forward(&Tensor3::zeros(3, 16, 16)).unwrap();
        assert_eq!(out.count(), 0.0);
        assert_eq!(out.shape(), (16, 16));
    }

    #[test]
    fn forward_resizes_with_mass_preserved() {
        let m = CountingModel::new_stub(tiny_config()).unwrap();
        let mut rng = Rng::new(1);
        let img = Tensor3::from_fn(3, 16, 16, |_, _, _| rng.normal());
        let raw = m.forward_raw(&img).unwrap();
        assert_eq!(raw.shape(), (16, 16));
        let out = m.forward(&img).unwrap();
        assert!((raw.count() - out.count()).abs() <= 1e-12 * raw.count().max(1.0));
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let m = CountingModel::new_stub(tiny_config()).unwrap();
        assert!(m.forward(&Tensor3::zeros(3, 16, 20)).is_err());
    }

    #[test]
    fn frozen_stub_is_not_trainable() {
        let m = CountingModel::new_stub(tiny_config()).unwrap();
        assert!(m.trainable_params().iter().all(|p| !p.name.starts_with("encoder")));
        let mut cfg = tiny_config();
        cfg.encoder.frozen = false;
        cfg.pos_scheme = PosScheme::Learned;
        let m = CountingModel::new_stub(cfg).unwrap();
        let names: Vec<&str> = m.trainable_params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names[0], "pos_embed");
        assert!(names.contains(&"encoder.stub.projection.weight"));
    }

    #[test]
    fn stub_fine_tuning_gradients_match_finite_differences() {
        let mut cfg = tiny_config();
        cfg.encoder.frozen = false;
        cfg.pos_scheme = PosScheme::Learned;
        cfg.decoder.output_activation = crate::nn::Activation::Softplus;
        let model = CountingModel::new_stub(cfg).unwrap();
        let mut rng = Rng::new(8);
        let img = Tensor3::from_fn(3, 16, 16, |_, _, _| rng.normal());
        let target = DensityMap::from_vec(
            16,
            16,
            (0..256).map(|_| rng.uniform()).collect(),
            crate::density::DensityMode::Predicted,
        )
        .unwrap();
        let (_, grads, _) = model.loss_and_grads(&img, &target, 1.0).unwrap();
        let n_params = model.trainable_params().len();
        let enc = n_params - 2;
        for (pi, idx) in [(0usize, 3usize), (enc, 10), (enc + 1, 2)] {
            let bump = |delta: f64| {
                let mut m = model.clone();
                m.trainable_params_mut()[pi].value[idx] += delta;
                m.loss_and_grads(&img, &target, 1.0).unwrap().0
            };
            let fd = (bump(1e-6) - bump(-1e-6)) / 2e-6;
            let an = grads[pi][idx];
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-6), "{pi}/{idx}: {fd} vs {an}");
        }
    }

    #[test]
    fn params_round_trip() {
        let a = CountingModel::new_stub(tiny_config()).unwrap();
        let mut cfg = tiny_config();
        cfg.seed = 99;
        let mut b = CountingModel::new_stub(cfg).unwrap();
        let stored: Vec<Param> = a.all_params().into_iter().cloned().collect();
        b.load_params(&stored).unwrap();
        let img = Tensor3::filled(3, 16, 16, 0.2);
        assert_eq!(a.forward(&img).unwrap(), b.forward(&img).unwrap());
        let mut missing = stored.clone();
        missing.pop();
        assert!(matches!(b.load_params(&missing), Err(Error::MissingParameter(_))));
    }

    #[test]
    fn mse_cases() {
        let mode = crate::density::DensityMode::Predicted;
        let ones = DensityMap::from_vec(2, 2, alloc::vec![1.0; 4], mode).unwrap();
        let zeros = DensityMap::zeros(2, 2, mode);
        assert_eq!(mse(&ones, &zeros).unwrap(), 1.0);
        assert_eq!(mse(&ones, &ones).unwrap(), 0.0);
        assert!(mse(&ones, &DensityMap::zeros(2, 3, mode)).is_err());
    }
}
