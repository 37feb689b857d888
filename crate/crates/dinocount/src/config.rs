//! TOML run configuration with `key.path=value` overrides.
//!
//! Every section has defaults, so an empty file is valid. Unknown keys, in
//! the file or in overrides, are rejected.

use std::path::{Path, PathBuf};

use dinocount_core::augment::{CropMode, Normalization};
use dinocount_core::decoder::DecoderConfig;
use dinocount_core::density::DensityMode;
use dinocount_core::encoder::{EncoderBackend, EncoderConfig, Variant};
use dinocount_core::fusion::PosScheme;
use dinocount_core::inference::{InferenceConfig, WindowMode};
use dinocount_core::model::ModelConfig;
use dinocount_core::nn::Activation;
use dinocount_core::train::{PipelineConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Root seed for initialisation, shuffling and augmentation.
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub pipeline: PipelineSection,
    pub inference: InferenceSection,
    pub data: DataSection,
    pub run: RunSection,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub input_side: usize,
    /// `sincos2d` or `learned`.
    pub pos_scheme: String,
    /// `imagenet` or `identity`.
    pub normalization: String,
    pub encoder: EncoderSection,
    pub decoder: DecoderSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            input_side: 224,
            pos_scheme: "sincos2d".into(),
            normalization: "imagenet".into(),
            encoder: EncoderSection::default(),
            decoder: DecoderSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    /// `dinov2` or `stub`.
    pub backend: String,
    /// `small`, `base` or `large`.
    pub variant: String,
    pub patch_size: usize,
    pub frozen: bool,
    /// Safetensors file with pretrained weights.
    pub weights: Option<PathBuf>,
    /// Stub feature width; defaults to the variant width.
    pub embed_dim: Option<usize>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            backend: "dinov2".into(),
            variant: "small".into(),
            patch_size: 14,
            frozen: true,
            weights: None,
            embed_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub stage_channels: [usize; 4],
    pub upsample_factors: [usize; 4],
    pub kernel_size: usize,
    /// `relu`, `softplus` or `none`.
    pub output_activation: String,
    pub density_scale: f64,
}

impl Default for DecoderSection {
    fn default() -> Self {
        let d = DecoderConfig::default();
        Self {
            stage_channels: d.stage_channels,
            upsample_factors: d.upsample_factors,
            kernel_size: d.kernel_size,
            output_activation: d.output_activation.as_str().into(),
            density_scale: d.density_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub loss_scale: f64,
    pub eval_every: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            epochs: t.epochs,
            loss_scale: t.loss_scale,
            eval_every: t.eval_every,
            max_grad_norm: t.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub resize_side: usize,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub max_rotation_deg: f64,
    /// `center` or `random`.
    pub crop_mode: String,
    /// `gaussian` or `impulse`.
    pub target: String,
    pub sigma: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            resize_side: p.resize_side,
            hflip_prob: p.hflip_prob,
            vflip_prob: p.vflip_prob,
            max_rotation_deg: p.max_rotation_deg,
            crop_mode: p.crop_mode.as_str().into(),
            target: "gaussian".into(),
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub window: usize,
    pub stride: usize,
    /// `native` or `resize-first`.
    pub mode: String,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let i = InferenceConfig::default();
        Self {
            window: i.window,
            stride: i.stride,
            mode: i.mode.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data/fsc147"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dir: PathBuf,
    pub name: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
            name: "default".into(),
        }
    }
}

fn parse<T: std::str::FromStr<Err = dinocount_core::Error>>(what: &str, s: &str) -> Result<T> {
    s.parse().map_err(|e: dinocount_core::Error| Error::Config(format!("{what}: {e}")))
}

impl AppConfig {
    /// Reads `path` (or starts from defaults) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::io(p))?;
                text.parse::<toml::Table>().map_err(|e| Error::format(p, e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: AppConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.model_config()?;
        cfg.train_config()?;
        cfg.pipeline_config()?;
        cfg.inference_config()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let normalization = match m.normalization.as_str() {
            "imagenet" => Normalization::IMAGENET,
            "identity" => Normalization::IDENTITY,
            other => return Err(Error::Config(format!("model.normalization: unknown value `{other}`"))),
        };
        let cfg = ModelConfig {
            input_side: m.input_side,
            encoder: EncoderConfig {
                backend: parse::<EncoderBackend>("model.encoder.backend", &m.encoder.backend)?,
                variant: parse::<Variant>("model.encoder.variant", &m.encoder.variant)?,
                patch_size: m.encoder.patch_size,
                frozen: m.encoder.frozen,
                weights_path: m.encoder.weights.as_ref().map(|p| p.display().to_string()),
                embed_dim: m.encoder.embed_dim,
            },
            pos_scheme: parse::<PosScheme>("model.pos_scheme", &m.pos_scheme)?,
            decoder: DecoderConfig {
                stage_channels: m.decoder.stage_channels,
                upsample_factors: m.decoder.upsample_factors,
                kernel_size: m.decoder.kernel_size,
                output_activation: parse::<Activation>("model.decoder.output_activation", &m.decoder.output_activation)?,
                density_scale: m.decoder.density_scale,
            },
            normalization,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            epochs: t.epochs,
            seed: self.seed,
            loss_scale: t.loss_scale,
            eval_every: t.eval_every,
            max_grad_norm: t.max_grad_norm,
        };
        cfg.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        Ok(cfg)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let p = &self.pipeline;
        let target_mode = match p.target.as_str() {
            "gaussian" if p.sigma > 0.0 => DensityMode::Gaussian { sigma: p.sigma },
            "gaussian" => return Err(Error::Config(format!("pipeline.sigma must be positive, got {}", p.sigma))),
            "impulse" => DensityMode::Impulse,
            other => return Err(Error::Config(format!("pipeline.target: unknown value `{other}`"))),
        };
        if p.resize_side < self.model.input_side {
            return Err(Error::Config(format!(
                "pipeline.resize_side ({}) is smaller than model.input_side ({})",
                p.resize_side, self.model.input_side
            )));
        }
        Ok(PipelineConfig {
            resize_side: p.resize_side,
            hflip_prob: p.hflip_prob,
            vflip_prob: p.vflip_prob,
            max_rotation_deg: p.max_rotation_deg,
            crop_mode: parse::<CropMode>("pipeline.crop_mode", &p.crop_mode)?,
            target_mode,
        })
    }

    pub fn inference_config(&self) -> Result<InferenceConfig> {
        let i = &self.inference;
        if i.window == 0 || i.stride == 0 {
            return Err(Error::Config("inference.window and inference.stride must be positive".into()));
        }
        Ok(InferenceConfig {
            window: i.window,
            stride: i.stride,
            mode: parse::<WindowMode>("inference.mode", &i.mode)?,
        })
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run.dir.join(&self.run.name)
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML literal
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{spec}` has an empty key segment")));
    }
    let value = parse_literal(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AppConfig::load(None, &[]).unwrap();
        assert_eq!(c, AppConfig::default());
        assert_eq!(c.train.learning_rate, 6.25e-6);
        assert_eq!(c.inference.stride, 128);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let c = AppConfig::load(
            None,
            &["train.epochs=3".into(), "model.encoder.backend=stub".into(), "train.max_grad_norm=1.5".into()],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.model.encoder.backend, "stub");
        assert_eq!(c.train.max_grad_norm, Some(1.5));
        assert!(AppConfig::load(None, &["train.epoch=3".into()]).is_err());
        assert!(AppConfig::load(None, &["nonsense".into()]).is_err());
        assert!(AppConfig::load(None, &["model.decoder.output_activation=tanh".into()]).is_err());
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let c = AppConfig::load(None, &["seed=9".into()]).unwrap();
        let back: AppConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(AppConfig::default().hash(), c.hash());
    }
}
