//! Inference-only DINOv2 vision transformer.
//!
//! Parameter names follow the reference `dinov2_vit*14` state dict:
//! `patch_embed.proj.{weight,bias}`, `cls_token`, `pos_embed`,
//! optional `register_tokens`, `blocks.{i}.norm1`, `blocks.{i}.attn.qkv`,
//! `blocks.{i}.attn.proj`, `blocks.{i}.ls1.gamma`, `blocks.{i}.norm2`,
//! `blocks.{i}.mlp.fc1`, `blocks.{i}.mlp.fc2`, `blocks.{i}.ls2.gamma` and
//! the final `norm`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_divisible, FeatureGrid};
use crate::{Error, Result, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct VitConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub patch_size: usize,
    pub layer_norm_eps: f64,
    /// Offset added to the target grid side when interpolating the position
    /// table, as in the reference implementation.
    pub interpolate_offset: f64,
}

impl VitConfig {
    pub fn for_variant(variant: super::Variant, patch_size: usize) -> Self {
        Self {
            embed_dim: variant.embed_dim(),
            depth: variant.depth(),
            num_heads: variant.num_heads(),
            patch_size,
            layer_norm_eps: 1e-6,
            interpolate_offset: 0.1,
        }
    }
}

/// A named array: `(shape, row-major values)`.
pub type NamedTensors = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

#[derive(Debug, Clone)]
struct Linear {
    out: usize,
    inp: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerNorm {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Block {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ls1: Vec<f64>,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    ls2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VisionTransformer {
    config: VitConfig,
    patch_weight: Vec<f64>,
    patch_bias: Vec<f64>,
    cls_token: Vec<f64>,
    register_tokens: Vec<f64>,
    num_registers: usize,
    /// `(1 + n·n) × D`, class position first.
    pos_embed: Vec<f64>,
    pos_side: usize,
    blocks: Vec<Block>,
    norm: LayerNorm,
}

struct Loader<'a> {
    tensors: &'a NamedTensors,
}

impl Loader<'_> {
    fn take(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let (s, v) = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.into()))?;
        let numel: usize = shape.iter().product();
        if s.iter().product::<usize>() != numel || v.len() != numel {
            return Err(Error::shape(format!("{name} {shape:?}"), s));
        }
        Ok(v.clone())
    }

    fn linear(&self, prefix: &str, out: usize, inp: usize) -> Result<Linear> {
        Ok(Linear {
            out,
            inp,
            weight: self.take(&format!("{prefix}.weight"), &[out, inp])?,
            bias: self.take(&format!("{prefix}.bias"), &[out])?,
        })
    }

    fn norm(&self, prefix: &str, dim: usize) -> Result<LayerNorm> {
        Ok(LayerNorm {
            weight: self.take(&format!("{prefix}.weight"), &[dim])?,
            bias: self.take(&format!("{prefix}.bias"), &[dim])?,
        })
    }
}

impl VisionTransformer {
    /// Builds the network from a reference-named state dict. The depth is
    /// taken from `config`; missing or mis-shaped tensors are errors.
    pub fn from_tensors(config: VitConfig, tensors: &NamedTensors) -> Result<Self> {
        let d = config.embed_dim;
        let p = config.patch_size;
        if config.num_heads == 0 || !d.is_multiple_of(config.num_heads) {
            return Err(Error::invalid(format!(
                "embed dim {d} is not divisible by {} heads",
                config.num_heads
            )));
        }
        let ld = Loader { tensors };
        let (pos_shape, _) = tensors
            .get("pos_embed")
            .ok_or_else(|| Error::MissingParameter("pos_embed".into()))?;
        let positions = pos_shape.iter().product::<usize>() / d.max(1);
        let pos_side = libm::sqrt(positions.saturating_sub(1) as f64) as usize;
        if pos_side * pos_side + 1 != positions {
            return Err(Error::shape("1 + n² position rows", pos_shape));
        }
        let (num_registers, register_tokens) = match tensors.get("register_tokens") {
            Some((s, v)) => (s.iter().product::<usize>() / d, v.clone()),
            None => (0, Vec::new()),
        };
        let blocks = (0..config.depth)
            .map(|i| {
                let b = format!("blocks.{i}");
                Ok(Block {
                    norm1: ld.norm(&format!("{b}.norm1"), d)?,
                    qkv: ld.linear(&format!("{b}.attn.qkv"), 3 * d, d)?,
                    proj: ld.linear(&format!("{b}.attn.proj"), d, d)?,
                    ls1: ld.take(&format!("{b}.ls1.gamma"), &[d])?,
                    norm2: ld.norm(&format!("{b}.norm2"), d)?,
                    fc1: {
                        let hidden = tensors
                            .get(&format!("{b}.mlp.fc1.bias"))
                            .map(|(s, _)| s.iter().product())
                            .unwrap_or(4 * d);
                        ld.linear(&format!("{b}.mlp.fc1"), hidden, d)?
                    },
                    fc2: {
                        let hidden = tensors
                            .get(&format!("{b}.mlp.fc1.bias"))
                            .map(|(s, _)| s.iter().product())
                            .unwrap_or(4 * d);
                        ld.linear(&format!("{b}.mlp.fc2"), d, hidden)?
                    },
                    ls2: ld.take(&format!("{b}.ls2.gamma"), &[d])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            patch_weight: ld.take("patch_embed.proj.weight", &[d, 3, p, p])?,
            patch_bias: ld.take("patch_embed.proj.bias", &[d])?,
            cls_token: ld.take("cls_token", &[d])?,
            register_tokens,
            num_registers,
            pos_embed: ld.take("pos_embed", &[positions, d])?,
            pos_side,
            blocks,
            norm: ld.norm("norm", d)?,
            config,
        })
    }

    pub fn config(&self) -> &VitConfig {
        &self.config
    }

    /// Spatial tokens of the final layer-normed sequence, as a `D × h × w`
    /// grid.
    pub fn encode(&self, image: &Tensor3) -> Result<FeatureGrid> {
        let (c, h, w) = image.shape();
        if c != 3 {
            return Err(Error::shape("3 channels", c));
        }
        let p = self.config.patch_size;
        check_divisible(h, w, p)?;
        let d = self.config.embed_dim;
        let (gh, gw) = (h / p, w / p);
        let n = gh * gw;
        let prefix = 1 + self.num_registers;
        let tokens = prefix + n;

        // sequence: [cls, registers..., patches...], row-major, T × D
        let mut x = vec![0.0; tokens * d];
        let patches = self.patch_embed(image, gh, gw);
        let pos = self.interpolated_positions(gh, gw);
        for ((v, c), q) in x[..d].iter_mut().zip(&self.cls_token).zip(&self.pos_embed) {
            *v = c + q;
        }
        x[prefix * d..].copy_from_slice(&patches);
        for (t, row) in x[prefix * d..].chunks_mut(d).enumerate() {
            for (v, q) in row.iter_mut().zip(&pos[t * d..(t + 1) * d]) {
                *v += q;
            }
        }
        x[d..prefix * d].copy_from_slice(&self.register_tokens);

        for block in &self.blocks {
            self.block_forward(block, &mut x, tokens);
        }
        let x = layer_norm(&x, &self.norm, d, self.config.layer_norm_eps);

        let mut grid = Tensor3::zeros(d, gh, gw);
        for t in 0..n {
            let row = &x[(prefix + t) * d..(prefix + t + 1) * d];
            for (k, &v) in row.iter().enumerate() {
                grid.as_mut_slice()[k * n + t] = v;
            }
        }
        Ok(FeatureGrid {
            values: grid,
            patch_size: p,
            source_shape: (h, w),
        })
    }

    /// Stride-`p` patch convolution; returns `n × D` row-major.
    fn patch_embed(&self, image: &Tensor3, gh: usize, gw: usize) -> Vec<f64> {
        let p = self.config.patch_size;
        let d = self.config.embed_dim;
        let w = image.width();
        let mut flat = vec![0.0; gh * gw * 3 * p * p];
        for r in 0..gh {
            for c in 0..gw {
                let dst = &mut flat[(r * gw + c) * 3 * p * p..(r * gw + c + 1) * 3 * p * p];
                for ch in 0..3 {
                    let src = image.channel(ch);
                    for py in 0..p {
                        let s = (r * p + py) * w + c * p;
                        dst[(ch * p + py) * p..(ch * p + py + 1) * p].copy_from_slice(&src[s..s + p]);
                    }
                }
            }
        }
        let lin = Linear {
            out: d,
            inp: 3 * p * p,
            weight: self.patch_weight.clone(),
            bias: self.patch_bias.clone(),
        };
        lin.forward(&flat, gh * gw)
    }

    /// Patch position table resampled to `gh × gw` with bicubic
    /// interpolation (`a = -0.75`, half-pixel centres).
    fn interpolated_positions(&self, gh: usize, gw: usize) -> Vec<f64> {
        let d = self.config.embed_dim;
        let n0 = self.pos_side;
        let table = &self.pos_embed[d..];
        if gh == n0 && gw == n0 {
            return table.to_vec();
        }
        let off = self.config.interpolate_offset;
        let wy = cubic_taps(n0, gh, n0 as f64 / (gh as f64 + off));
        let wx = cubic_taps(n0, gw, n0 as f64 / (gw as f64 + off));
        let mut out = vec![0.0; gh * gw * d];
        for (oy, ty) in wy.iter().enumerate() {
            for (ox, tx) in wx.iter().enumerate() {
                let dst = &mut out[(oy * gw + ox) * d..(oy * gw + ox + 1) * d];
                for &(iy, a) in ty {
                    for &(ix, b) in tx {
                        let src = &table[(iy * n0 + ix) * d..(iy * n0 + ix + 1) * d];
                        for (o, s) in dst.iter_mut().zip(src) {
                            *o += a * b * s;
                        }
                    }
                }
            }
        }
        out
    }

    fn block_forward(&self, b: &Block, x: &mut [f64], tokens: usize) {
        let d = self.config.embed_dim;
        let eps = self.config.layer_norm_eps;
        let h = layer_norm(x, &b.norm1, d, eps);
        let attn = self.attention(b, &h, tokens);
        for (t, row) in x.chunks_mut(d).enumerate() {
            for k in 0..d {
                row[k] += b.ls1[k] * attn[t * d + k];
            }
        }
        let h = layer_norm(x, &b.norm2, d, eps);
        let mut hidden = b.fc1.forward(&h, tokens);
        for v in &mut hidden {
            *v = gelu(*v);
        }
        let mlp = b.fc2.forward(&hidden, tokens);
        for (t, row) in x.chunks_mut(d).enumerate() {
            for k in 0..d {
                row[k] += b.ls2[k] * mlp[t * d + k];
            }
        }
    }

    fn attention(&self, b: &Block, x: &[f64], tokens: usize) -> Vec<f64> {
        let d = self.config.embed_dim;
        let heads = self.config.num_heads;
        let hd = d / heads;
        let scale = 1.0 / libm::sqrt(hd as f64);
        let qkv = b.qkv.forward(x, tokens);
        // qkv row layout: [q | k | v], each split into heads of width hd
        let mut ctx = vec![0.0; tokens * d];
        let per_query = crate::par::map_indexed(tokens * heads, |job| {
            let (t, head) = (job / heads, job % heads);
            let q = &qkv[t * 3 * d + head * hd..t * 3 * d + (head + 1) * hd];
            let mut scores: Vec<f64> = (0..tokens)
                .map(|s| {
                    let k = &qkv[s * 3 * d + d + head * hd..s * 3 * d + d + (head + 1) * hd];
                    q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in &mut scores {
                *s = libm::exp(*s - max);
                z += *s;
            }
            let mut out = vec![0.0; hd];
            for (s, &a) in scores.iter().enumerate() {
                let v = &qkv[s * 3 * d + 2 * d + head * hd..s * 3 * d + 2 * d + (head + 1) * hd];
                for (o, vv) in out.iter_mut().zip(v) {
                    *o += a / z * vv;
                }
            }
            out
        });
        for (job, out) in per_query.into_iter().enumerate() {
            let (t, head) = (job / heads, job % heads);
            ctx[t * d + head * hd..t * d + (head + 1) * hd].copy_from_slice(&out);
        }
        b.proj.forward(&ctx, tokens)
    }
}

impl Linear {
    /// `x · Wᵀ + b` for `rows` row vectors.
    fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), rows * self.inp);
        let mut out = vec![0.0; rows * self.out];
        crate::par::for_each_chunk(&mut out, self.out, |r, dst| {
            let xr = &x[r * self.inp..(r + 1) * self.inp];
            for (o, v) in dst.iter_mut().enumerate() {
                let wr = &self.weight[o * self.inp..(o + 1) * self.inp];
                *v = self.bias[o] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        });
        out
    }
}

fn layer_norm(x: &[f64], ln: &LayerNorm, d: usize, eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(d).zip(out.chunks_mut(d)) {
        let mean = src.iter().sum::<f64>() / d as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / libm::sqrt(var + eps);
        for k in 0..d {
            dst[k] = (src[k] - mean) * inv * ln.weight[k] + ln.bias[k];
        }
    }
    out
}

/// Exact (erf) GELU.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

/// Bicubic taps per output index; source indices clamped to the edge.
fn cubic_taps(src_len: usize, dst_len: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    const A: f64 = -0.75;
    let near = |t: f64| ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0;
    let far = |t: f64| ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A;
    (0..dst_len)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            let x0 = libm::floor(src);
            let t = src - x0;
            let weights = [far(t + 1.0), near(t), near(1.0 - t), far(2.0 - t)];
            weights
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let idx = (x0 as isize + k as isize - 1).clamp(0, src_len as isize - 1) as usize;
                    (idx, w)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Random reference-named weights for a tiny transformer.
    pub(crate) fn tiny_tensors(cfg: &VitConfig, pos_side: usize, registers: usize, seed: u64) -> NamedTensors {
        let mut rng = Rng::new(seed);
        let d = cfg.embed_dim;
        let p = cfg.patch_size;
        let mut t = NamedTensors::new();
        let mut put = |name: String, shape: Vec<usize>, scale: f64, rng: &mut Rng| {
            let n = shape.iter().product();
            let v = (0..n).map(|_| rng.normal() * scale).collect();
            t.insert(name, (shape, v));
        };
        put("patch_embed.proj.weight".into(), vec![d, 3, p, p], 0.3, &mut rng);
        put("patch_embed.proj.bias".into(), vec![d], 0.1, &mut rng);
        put("cls_token".into(), vec![1, 1, d], 0.5, &mut rng);
        put("pos_embed".into(), vec![1, 1 + pos_side * pos_side, d], 0.5, &mut rng);
        if registers > 0 {
            put("register_tokens".into(), vec![1, registers, d], 0.5, &mut rng);
        }
        for i in 0..cfg.depth {
            let b = format!("blocks.{i}");
            put(format!("{b}.norm1.weight"), vec![d], 0.2, &mut rng);
            put(format!("{b}.norm1.bias"), vec![d], 0.1, &mut rng);
            put(format!("{b}.attn.qkv.weight"), vec![3 * d, d], 0.4, &mut rng);
            put(format!("{b}.attn.qkv.bias"), vec![3 * d], 0.1, &mut rng);
            put(format!("{b}.attn.proj.weight"), vec![d, d], 0.4, &mut rng);
            put(format!("{b}.attn.proj.bias"), vec![d], 0.1, &mut rng);
            put(format!("{b}.ls1.gamma"), vec![d], 0.5, &mut rng);
            put(format!("{b}.norm2.weight"), vec![d], 0.2, &mut rng);
            put(format!("{b}.norm2.bias"), vec![d], 0.1, &mut rng);
            put(format!("{b}.mlp.fc1.weight"), vec![4 * d, d], 0.4, &mut rng);
            put(format!("{b}.mlp.fc1.bias"), vec![4 * d], 0.1, &mut rng);
            put(format!("{b}.mlp.fc2.weight"), vec![d, 4 * d], 0.2, &mut rng);
            put(format!("{b}.mlp.fc2.bias"), vec![d], 0.1, &mut rng);
            put(format!("{b}.ls2.gamma"), vec![d], 0.5, &mut rng);
        }
        put("norm.weight".into(), vec![d], 1.0, &mut rng);
        put("norm.bias".into(), vec![d], 0.1, &mut rng);
        t
    }

    fn tiny_config() -> VitConfig {
        VitConfig {
            embed_dim: 8,
            depth: 2,
            num_heads: 2,
            patch_size: 2,
            layer_norm_eps: 1e-6,
            interpolate_offset: 0.1,
        }
    }

    /// Straight-line transformer forward over explicit token vectors, used as
    /// an independent oracle for the optimized path.
    fn reference_forward(cfg: &VitConfig, t: &NamedTensors, img: &Tensor3) -> Vec<Vec<f64>> {
        let g = |n: &str| t[n].1.clone();
        let d = cfg.embed_dim;
        let p = cfg.patch_size;
        let (gh, gw) = (img.height() / p, img.width() / p);
        let pw = g("patch_embed.proj.weight");
        let pb = g("patch_embed.proj.bias");
        let pos = g("pos_embed");
        let mut seq: Vec<Vec<f64>> = Vec::new();
        seq.push((0..d).map(|k| g("cls_token")[k] + pos[k]).collect());
        for r in 0..gh {
            for c in 0..gw {
                let mut v = pb.clone();
                for (k, vk) in v.iter_mut().enumerate() {
                    for ch in 0..3 {
                        for py in 0..p {
                            for px in 0..p {
                                *vk += pw[((k * 3 + ch) * p + py) * p + px] * img.get(ch, r * p + py, c * p + px);
                            }
                        }
                    }
                    *vk += pos[(1 + r * gw + c) * d + k];
                }
                seq.push(v);
            }
        }
        let ln = |v: &[f64], w: &[f64], b: &[f64]| -> Vec<f64> {
            let m = v.iter().sum::<f64>() / d as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d as f64;
            (0..d).map(|k| (v[k] - m) / (var + 1e-6).sqrt() * w[k] + b[k]).collect()
        };
        let lin = |v: &[f64], w: &[f64], b: &[f64]| -> Vec<f64> {
            let inp = v.len();
            (0..b.len()).map(|o| b[o] + (0..inp).map(|i| w[o * inp + i] * v[i]).sum::<f64>()).collect()
        };
        let hd = d / cfg.num_heads;
        for i in 0..cfg.depth {
            let b = |s: &str| g(&format!("blocks.{i}.{s}"));
            let normed: Vec<Vec<f64>> = seq.iter().map(|v| ln(v, &b("norm1.weight"), &b("norm1.bias"))).collect();
            let qkv: Vec<Vec<f64>> = normed.iter().map(|v| lin(v, &b("attn.qkv.weight"), &b("attn.qkv.bias"))).collect();
            let mut ctx = vec![vec![0.0; d]; seq.len()];
            for head in 0..cfg.num_heads {
                for (ti, q) in qkv.iter().enumerate() {
                    let logits: Vec<f64> = qkv
                        .iter()
                        .map(|k| {
                            (0..hd).map(|j| q[head * hd + j] * k[d + head * hd + j]).sum::<f64>() / (hd as f64).sqrt()
                        })
                        .collect();
                    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
                    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for j in 0..hd {
                        ctx[ti][head * hd + j] = (0..seq.len()).map(|s| e[s] / z * qkv[s][2 * d + head * hd + j]).sum();
                    }
                }
            }
            for (ti, c) in ctx.iter().enumerate() {
                let a = lin(c, &b("attn.proj.weight"), &b("attn.proj.bias"));
                for k in 0..d {
                    seq[ti][k] += b("ls1.gamma")[k] * a[k];
                }
            }
            for v in seq.iter_mut() {
                let n2 = ln(v, &b("norm2.weight"), &b("norm2.bias"));
                let hid: Vec<f64> = lin(&n2, &b("mlp.fc1.weight"), &b("mlp.fc1.bias"))
                    .into_iter()
                    .map(|x| 0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt())))
                    .collect();
                let m = lin(&hid, &b("mlp.fc2.weight"), &b("mlp.fc2.bias"));
                for k in 0..d {
                    v[k] += b("ls2.gamma")[k] * m[k];
                }
            }
        }
        seq.iter().skip(1).map(|v| ln(v, &g("norm.weight"), &g("norm.bias"))).collect()
    }

    #[test]
    fn matches_reference_forward() {
        let cfg = tiny_config();
        let t = tiny_tensors(&cfg, 3, 0, 1);
        let vit = VisionTransformer::from_tensors(cfg.clone(), &t).unwrap();
        let mut rng = Rng::new(2);
        let img = Tensor3::from_fn(3, 6, 6, |_, _, _| rng.normal());
        let grid = vit.encode(&img).unwrap();
        assert_eq!(grid.grid_shape(), (3, 3));
        let reference = reference_forward(&cfg, &t, &img);
        for (i, tok) in reference.iter().enumerate() {
            let got = grid.token(i / 3, i % 3);
            for (a, b) in got.iter().zip(tok) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn registers_are_discarded() {
        let cfg = tiny_config();
        let t = tiny_tensors(&cfg, 3, 4, 5);
        let vit = VisionTransformer::from_tensors(cfg, &t).unwrap();
        let img = Tensor3::filled(3, 8, 4, 0.3);
        let grid = vit.encode(&img).unwrap();
        assert_eq!(grid.grid_shape(), (4, 2));
        assert_eq!(grid.tokens(), 8);
        assert!(grid.values.is_finite());
    }

    #[test]
    fn bicubic_identity_at_same_size_without_offset() {
        let taps = cubic_taps(5, 5, 1.0);
        for (i, t) in taps.iter().enumerate() {
            let w: f64 = t.iter().filter(|(j, _)| *j == i).map(|(_, w)| w).sum();
            assert!((w - 1.0).abs() < 1e-12);
            let total: f64 = t.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_tensor_is_reported() {
        let cfg = tiny_config();
        let mut t = tiny_tensors(&cfg, 3, 0, 1);
        t.remove("blocks.1.ls2.gamma");
        match VisionTransformer::from_tensors(cfg, &t) {
            Err(Error::MissingParameter(name)) => assert_eq!(name, "blocks.1.ls2.gamma"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let cfg = tiny_config();
        let t = tiny_tensors(&cfg, 4, 0, 3);
        let vit = VisionTransformer::from_tensors(cfg, &t).unwrap();
        let img = Tensor3::from_fn(3, 4, 6, |c, y, x| (c + y * x) as f64 * 0.1);
        assert_eq!(vit.encode(&img).unwrap(), vit.encode(&img).unwrap());
    }
}
