//! DINOv2 backbone weights from safetensors.
//!
//! Accepts both the torch hub naming (`blocks.0.attn.qkv.weight`, ...) and
//! the Hugging Face `transformers` naming (`encoder.layer.0.attention...`),
//! in F32, F16, BF16 or F64.

use std::path::Path;

use dinocount_core::encoder::vit::{NamedTensors, VisionTransformer, VitConfig};
use dinocount_core::encoder::Variant;
use safetensors::tensor::{Dtype, SafeTensors};

use crate::{Error, Result};

fn to_f64(path: &Path, name: &str, dtype: Dtype, data: &[u8]) -> Result<Vec<f64>> {
    let v = match dtype {
        Dtype::F64 => data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F32 => data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::BF16 => data
            .chunks_exact(2)
            .map(|c| f32::from_bits((u16::from_le_bytes([c[0], c[1]]) as u32) << 16) as f64)
            .collect(),
        Dtype::F16 => data.chunks_exact(2).map(|c| f16_to_f64(u16::from_le_bytes([c[0], c[1]]))).collect(),
        other => return Err(Error::format(path, format!("tensor `{name}` has unsupported dtype {other:?}"))),
    };
    Ok(v)
}

fn f16_to_f64(h: u16) -> f64 {
    let sign = if h & 0x8000 != 0 { -1.0 } else { 1.0 };
    let exp = ((h >> 10) & 0x1f) as i32;
    let frac = (h & 0x3ff) as f64;
    match exp {
        0 => sign * frac * 2f64.powi(-24),
        31 if frac == 0.0 => sign * f64::INFINITY,
        31 => f64::NAN,
        e => sign * (1.0 + frac / 1024.0) * 2f64.powi(e - 15),
    }
}

/// Maps a Hugging Face tensor name to hub naming; `None` for tensors the
/// forward pass does not use. Query/key/value are renamed to temporary
/// `qkv_part` names and concatenated afterwards.
fn hub_name(name: &str) -> Option<String> {
    let n = name.strip_prefix("dinov2.").unwrap_or(name);
    let simple = [
        ("embeddings.cls_token", "cls_token"),
        ("embeddings.mask_token", ""),
        ("embeddings.position_embeddings", "pos_embed"),
        ("embeddings.register_tokens", "register_tokens"),
        ("embeddings.patch_embeddings.projection.weight", "patch_embed.proj.weight"),
        ("embeddings.patch_embeddings.projection.bias", "patch_embed.proj.bias"),
        ("layernorm.weight", "norm.weight"),
        ("layernorm.bias", "norm.bias"),
    ];
    if let Some((_, to)) = simple.iter().find(|(from, _)| *from == n) {
        return (!to.is_empty()).then(|| to.to_string());
    }
    let rest = n.strip_prefix("encoder.layer.")?;
    let (i, tail) = rest.split_once('.')?;
    let mapped = match tail {
        "norm1.weight" | "norm1.bias" | "norm2.weight" | "norm2.bias" => tail.to_string(),
        "attention.attention.query.weight" => "attn.qkv_part.0.weight".into(),
        "attention.attention.query.bias" => "attn.qkv_part.0.bias".into(),
        "attention.attention.key.weight" => "attn.qkv_part.1.weight".into(),
        "attention.attention.key.bias" => "attn.qkv_part.1.bias".into(),
        "attention.attention.value.weight" => "attn.qkv_part.2.weight".into(),
        "attention.attention.value.bias" => "attn.qkv_part.2.bias".into(),
        "attention.output.dense.weight" => "attn.proj.weight".into(),
        "attention.output.dense.bias" => "attn.proj.bias".into(),
        "layer_scale1.lambda1" => "ls1.gamma".into(),
        "layer_scale2.lambda1" => "ls2.gamma".into(),
        "mlp.fc1.weight" | "mlp.fc1.bias" | "mlp.fc2.weight" | "mlp.fc2.bias" => tail.to_string(),
        _ => return None,
    };
    Some(format!("blocks.{i}.{mapped}"))
}

/// Normalises a tensor map to hub naming.
pub fn to_hub_names(tensors: NamedTensors) -> NamedTensors {
    if tensors.contains_key("patch_embed.proj.weight") {
        return tensors;
    }
    let mut out = NamedTensors::new();
    for (name, t) in tensors {
        if let Some(h) = hub_name(&name) {
            out.insert(h, t);
        }
    }
    let parts: Vec<String> = out.keys().filter(|k| k.contains(".attn.qkv_part.0.")).cloned().collect();
    for k in parts {
        let q = out.remove(&k).expect("present");
        let kk = out.remove(&k.replace("qkv_part.0", "qkv_part.1"));
        let v = out.remove(&k.replace("qkv_part.0", "qkv_part.2"));
        if let (Some(kk), Some(v)) = (kk, v) {
            let mut shape = q.0.clone();
            shape[0] *= 3;
            let mut data = q.1;
            data.extend(kk.1);
            data.extend(v.1);
            out.insert(k.replace("qkv_part.0", "qkv"), (shape, data));
        }
    }
    out
}

pub fn read_tensors(path: &Path) -> Result<NamedTensors> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = NamedTensors::new();
    for (name, view) in st.iter() {
        let v = to_f64(path, name, view.dtype(), view.data())?;
        out.insert(name.to_string(), (view.shape().to_vec(), v));
    }
    Ok(out)
}

pub fn load(path: &Path, variant: Variant, patch_size: usize) -> Result<VisionTransformer> {
    let tensors = to_hub_names(read_tensors(path)?);
    let cfg = VitConfig::for_variant(variant, patch_size);
    Ok(VisionTransformer::from_tensors(cfg, &tensors)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_precision_decoding() {
        assert_eq!(f16_to_f64(0x3c00), 1.0);
        assert_eq!(f16_to_f64(0xc000), -2.0);
        assert_eq!(f16_to_f64(0x0001), 2f64.powi(-24));
        assert!(f16_to_f64(0x7c00).is_infinite());
    }

    #[test]
    fn hf_names_map_to_hub() {
        assert_eq!(hub_name("embeddings.cls_token").unwrap(), "cls_token");
        assert_eq!(hub_name("encoder.layer.3.layer_scale2.lambda1").unwrap(), "blocks.3.ls2.gamma");
        assert_eq!(hub_name("encoder.layer.0.attention.output.dense.bias").unwrap(), "blocks.0.attn.proj.bias");
        assert!(hub_name("embeddings.mask_token").is_none());
    }

    #[test]
    fn qkv_is_concatenated_in_order() {
        let mut t = NamedTensors::new();
        for (i, n) in ["query", "key", "value"].iter().enumerate() {
            t.insert(
                format!("encoder.layer.0.attention.attention.{n}.weight"),
                (vec![1, 2], vec![i as f64, i as f64 + 0.5]),
            );
        }
        let h = to_hub_names(t);
        assert_eq!(h["blocks.0.attn.qkv.weight"], (vec![3, 2], vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]));
    }
}
