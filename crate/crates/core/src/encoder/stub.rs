use alloc::vec;
use alloc::vec::Vec;

use super::{check_divisible, FeatureGrid};
use crate::nn::Param;
use crate::rng::Rng;
use crate::{Error, Result, Tensor3};

/// Seeded random affine patch projection standing in for a pretrained
/// backbone, so everything runs without downloaded weights.
///
/// Each `p × p × 3` patch, flattened channel-major, is mapped to
/// `W · patch + b`. The map is Lipschitz with constant
/// [`StubEncoder::lipschitz`], the spectral norm of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct StubEncoder {
    patch_size: usize,
    embed_dim: usize,
    pub projection: Param,
    pub bias: Param,
    lipschitz: f64,
}

impl StubEncoder {
    pub fn new(patch_size: usize, embed_dim: usize, seed: u64) -> Self {
        let fan_in = 3 * patch_size * patch_size;
        let mut rng = Rng::derive(seed, 0x5755_4245);
        let std = 1.0 / libm::sqrt(fan_in as f64);
        let w: Vec<f64> = (0..embed_dim * fan_in).map(|_| rng.normal() * std).collect();
        let b: Vec<f64> = (0..embed_dim).map(|_| 0.1 * rng.normal()).collect();
        let lipschitz = spectral_norm(&w, embed_dim, fan_in, seed);
        Self {
            patch_size,
            embed_dim,
            projection: Param::new(
                "encoder.stub.projection.weight",
                vec![embed_dim, 3, patch_size, patch_size],
                w,
            ),
            bias: Param::new("encoder.stub.projection.bias", vec![embed_dim], b),
            lipschitz,
        }
    }

    /// Rebuilds a stub from stored parameters.
    pub fn from_params(projection: Param, bias: Param) -> Result<Self> {
        let [d, c, p, q] = projection.shape[..] else {
            return Err(Error::shape("[D, 3, p, p]", &projection.shape));
        };
        if c != 3 || p != q || bias.shape != [d] {
            return Err(Error::shape(&projection.shape, &bias.shape));
        }
        let lipschitz = spectral_norm(&projection.value, d, 3 * p * p, 0);
        Ok(Self {
            patch_size: p,
            embed_dim: d,
            projection,
            bias,
            lipschitz,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Operator norm of the projection, computed once at construction.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn fan_in(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    /// Projects a single flattened patch.
    pub fn project(&self, patch: &[f64]) -> Result<Vec<f64>> {
        if patch.len() != self.fan_in() {
            return Err(Error::shape(self.fan_in(), patch.len()));
        }
        Ok((0..self.embed_dim)
            .map(|d| {
                let row = &self.projection.value[d * self.fan_in()..(d + 1) * self.fan_in()];
                self.bias.value[d] + row.iter().zip(patch).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    pub fn encode(&self, image: &Tensor3) -> Result<FeatureGrid> {
        let (c, h, w) = image.shape();
        if c != 3 {
            return Err(Error::shape("3 channels", c));
        }
        check_divisible(h, w, self.patch_size)?;
        let p = self.patch_size;
        let (gh, gw) = (h / p, w / p);
        let fan_in = self.fan_in();
        let mut out = Tensor3::zeros(self.embed_dim, gh, gw);
        crate::par::for_each_chunk(out.as_mut_slice(), gh * gw, |d, plane| {
            let row = &self.projection.value[d * fan_in..(d + 1) * fan_in];
            plane.fill(self.bias.value[d]);
            for ch in 0..3 {
                let src = image.channel(ch);
                for py in 0..p {
                    let wrow = &row[(ch * p + py) * p..(ch * p + py + 1) * p];
                    for r in 0..gh {
                        let line = &src[(r * p + py) * w..(r * p + py + 1) * w];
                        for cidx in 0..gw {
                            let px = &line[cidx * p..(cidx + 1) * p];
                            plane[r * gw + cidx] += wrow.iter().zip(px).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
        });
        Ok(FeatureGrid {
            values: out,
            patch_size: p,
            source_shape: (h, w),
        })
    }

    /// Gradients of the projection weight and bias given the gradient of
    /// the grid produced from `image`.
    pub fn backward(&self, image: &Tensor3, grad: &Tensor3) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.patch_size;
        let (_, h, w) = image.shape();
        let (gh, gw) = (h / p, w / p);
        if grad.shape() != (self.embed_dim, gh, gw) {
            return Err(Error::shape(grad.shape(), (self.embed_dim, gh, gw)));
        }
        let fan_in = self.fan_in();
        let grad_bias = (0..self.embed_dim).map(|d| grad.channel(d).iter().sum()).collect();
        let mut grad_w = vec![0.0; self.embed_dim * fan_in];
        crate::par::for_each_chunk(&mut grad_w, fan_in, |d, gw_row| {
            let g = grad.channel(d);
            for ch in 0..3 {
                let src = image.channel(ch);
                for py in 0..p {
                    for px in 0..p {
                        let mut acc = 0.0;
                        for r in 0..gh {
                            for c in 0..gw {
                                acc += g[r * gw + c] * src[(r * p + py) * w + c * p + px];
                            }
                        }
                        gw_row[(ch * p + py) * p + px] = acc;
                    }
                }
            }
        });
        Ok((grad_w, grad_bias))
    }
}

/// Projects one `p × p × 3` patch (flattened channel-major) through the stub
/// encoder seeded with `seed`.
pub fn stub_project(patch: &[f64], patch_size: usize, embed_dim: usize, seed: u64) -> Result<Vec<f64>> {
    StubEncoder::new(patch_size, embed_dim, seed).project(patch)
}

/// Largest singular value of a row-major `rows × cols` matrix by power
/// iteration on `AᵀA`.
fn spectral_norm(a: &[f64], rows: usize, cols: usize, seed: u64) -> f64 {
    let mut rng = Rng::derive(seed, 0x504f_5745);
    let mut v: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
    let mut sigma = 0.0;
    let mut av = vec![0.0; rows];
    for _ in 0..300 {
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for (r, out) in av.iter_mut().enumerate() {
            *out = a[r * cols..(r + 1) * cols].iter().zip(&v).map(|(p, q)| p * q).sum();
        }
        sigma = libm::sqrt(av.iter().map(|x| x * x).sum::<f64>());
        let mut next = vec![0.0; cols];
        for (r, &s) in av.iter().enumerate() {
            for (n, &x) in next.iter_mut().zip(&a[r * cols..(r + 1) * cols]) {
                *n += s * x;
            }
        }
        v = next;
    }
    sigma
}
