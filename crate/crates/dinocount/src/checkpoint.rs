//! Model checkpoints as safetensors files.
//!
//! Every parameter is stored as an `F64` tensor under its parameter name.
//! Metadata lives under a single header key, `dinocount`, whose value is a
//! JSON object; keeping one key makes the header byte-stable.

use std::collections::HashMap;
use std::path::Path;

use dinocount_core::model::CountingModel;
use dinocount_core::nn::Param;
use dinocount_core::train::Checkpoint;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::AppConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const META_KEY: &str = "dinocount";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub epoch: usize,
    /// Absent for checkpoints that were never validated.
    pub val_mae: Option<f64>,
    pub val_rmse: Option<f64>,
    pub seed: u64,
    pub config: AppConfig,
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Param>,
    /// Hex SHA-256 of the file bytes.
    pub id: String,
}

pub fn encode(params: &[&Param], meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = params
        .iter()
        .map(|p| {
            let b: Vec<u8> = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
            (p.name.clone(), p.shape.clone(), b)
        })
        .collect();
    let mut views = Vec::with_capacity(bytes.len());
    for (name, shape, b) in &bytes {
        let v = TensorView::new(Dtype::F64, shape.clone(), b)
            .map_err(|e| Error::Config(format!("tensor `{name}`: {e}")))?;
        views.push((name.clone(), v));
    }
    let info = HashMap::from([(META_KEY.to_string(), serde_json::to_string(meta).expect("serialisable"))]);
    safetensors::serialize(views, Some(info)).map_err(|e| Error::Config(format!("checkpoint encoding: {e}")))
}

pub fn save(path: &Path, params: &[&Param], meta: &CheckpointMeta) -> Result<String> {
    let bytes = encode(params, meta)?;
    crate::image_io::ensure_parent(path)?;
    std::fs::write(path, &bytes).map_err(Error::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes a training checkpoint with the run configuration.
pub fn save_training(path: &Path, ckpt: &Checkpoint, config: &AppConfig) -> Result<String> {
    let meta = CheckpointMeta {
        schema_version: SCHEMA_VERSION,
        epoch: ckpt.epoch,
        val_mae: ckpt.val_mae.is_finite().then_some(ckpt.val_mae),
        val_rmse: ckpt.val_rmse.is_finite().then_some(ckpt.val_rmse),
        seed: config.seed,
        config: config.clone(),
    };
    save(path, &ckpt.params.iter().collect::<Vec<_>>(), &meta)
}

pub fn load(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    let bad = |m: String| Error::format(path, m);
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(format!("not a safetensors file: {e}")))?;
    let meta_json = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| bad("missing checkpoint metadata".into()))?;
    let meta: CheckpointMeta = serde_json::from_str(meta_json).map_err(|e| bad(format!("checkpoint metadata: {e}")))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(bad(format!("unsupported checkpoint schema {}", meta.schema_version)));
    }
    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(e.to_string()))?;
    let mut params = Vec::new();
    for (name, view) in st.iter() {
        if view.dtype() != Dtype::F64 {
            return Err(bad(format!("tensor `{name}` has dtype {:?}, expected F64", view.dtype())));
        }
        let value = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(Param::new(name, view.shape().to_vec(), value));
    }
    Ok(LoadedCheckpoint {
        meta,
        params,
        id: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Builds the model described by `config` without loading trained weights.
pub fn build_model(config: &AppConfig) -> Result<CountingModel> {
    let mc = config.model_config()?;
    match mc.encoder.backend {
        dinocount_core::encoder::EncoderBackend::Stub => Ok(CountingModel::new_stub(mc)?),
        dinocount_core::encoder::EncoderBackend::PretrainedDinov2 => {
            let path = config.model.encoder.weights.as_ref().ok_or_else(|| {
                Error::Config("model.encoder.weights must point to DINOv2 safetensors weights for the dinov2 backend".into())
            })?;
            let vit = crate::dinov2::load(path, mc.encoder.variant, mc.encoder.patch_size)?;
            Ok(CountingModel::with_encoder(mc, dinocount_core::encoder::Encoder::Vit(vit))?)
        }
    }
}

/// Rebuilds a trained model from a checkpoint file.
pub fn load_model(path: &Path) -> Result<(CountingModel, LoadedCheckpoint)> {
    let ck = load(path)?;
    let mut model = build_model(&ck.meta.config)?;
    model.load_params(&ck.params)?;
    Ok((model, ck))
}

/// Writes a fresh, untrained model as a checkpoint; useful for exercising
/// the file pipeline without training.
pub fn save_untrained(path: &Path, config: &AppConfig) -> Result<String> {
    let model = build_model(config)?;
    let meta = CheckpointMeta {
        schema_version: SCHEMA_VERSION,
        epoch: 0,
        val_mae: None,
        val_rmse: None,
        seed: config.seed,
        config: config.clone(),
    };
    save(path, &model.all_params(), &meta)
}
