//! 2D positional embeddings and additive fusion with encoder features.

use alloc::format;
use alloc::vec;

use crate::encoder::FeatureGrid;
use crate::nn::Param;
use crate::rng::Rng;
use crate::{Error, Result, Tensor3};

/// Base of the geometric frequency ladder.
pub const FREQUENCY_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosScheme {
    /// Fixed sine/cosine table.
    SinCos2d,
    /// Trainable table with a seeded initialization.
    Learned,
}

impl PosScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            PosScheme::SinCos2d => "sincos2d",
            PosScheme::Learned => "learned",
        }
    }
}

impl core::str::FromStr for PosScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sincos2d" => Ok(PosScheme::SinCos2d),
            "learned" => Ok(PosScheme::Learned),
            other => Err(Error::invalid(format!("unknown positional scheme `{other}`"))),
        }
    }
}

/// A `D × h × w` table added to a feature grid of the same shape.
///
/// Channel layout for [`PosScheme::SinCos2d`] with `q = D / 4` and
/// `ω_k = 10000^(-k/q)`:
///
/// | channels      | value          |
/// |---------------|----------------|
/// | `[0, q)`      | `sin(row·ω_k)` |
/// | `[q, 2q)`     | `cos(row·ω_k)` |
/// | `[2q, 3q)`    | `sin(col·ω_k)` |
/// | `[3q, 4q)`    | `cos(col·ω_k)` |
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEmbedding {
    pub values: Param,
    pub scheme: PosScheme,
    height: usize,
    width: usize,
}

impl PositionalEmbedding {
    pub const PARAM_NAME: &'static str = "pos_embed";

    pub fn embed_dim(&self) -> usize {
        self.values.shape[0]
    }

    /// `(h, w)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, d: usize, row: usize, col: usize) -> f64 {
        self.values.value[(d * self.height + row) * self.width + col]
    }

    pub fn is_trainable(&self) -> bool {
        self.scheme == PosScheme::Learned
    }

    /// Rebuilds an embedding from a stored table.
    pub fn from_param(values: Param, scheme: PosScheme) -> Result<Self> {
        let [_, h, w] = values.shape[..] else {
            return Err(Error::shape("[D, h, w]", &values.shape));
        };
        Ok(Self {
            values,
            scheme,
            height: h,
            width: w,
        })
    }
}

pub fn make_pos_embedding(h: usize, w: usize, dim: usize, scheme: PosScheme, seed: u64) -> Result<PositionalEmbedding> {
    if h == 0 || w == 0 || dim == 0 {
        return Err(Error::invalid("positional embedding shape must be positive"));
    }
    let value = match scheme {
        PosScheme::SinCos2d => {
            if !dim.is_multiple_of(4) {
                return Err(Error::invalid(format!(
                    "sincos2d needs an embedding dim divisible by 4, got {dim}"
                )));
            }
            let q = dim / 4;
            let mut v = vec![0.0; dim * h * w];
            for k in 0..q {
                let omega = libm::pow(FREQUENCY_BASE, -(k as f64) / q as f64);
                for r in 0..h {
                    for c in 0..w {
                        let at = |ch: usize| (ch * h + r) * w + c;
                        let (ar, ac) = (r as f64 * omega, c as f64 * omega);
                        v[at(k)] = libm::sin(ar);
                        v[at(q + k)] = libm::cos(ar);
                        v[at(2 * q + k)] = libm::sin(ac);
                        v[at(3 * q + k)] = libm::cos(ac);
                    }
                }
            }
            v
        }
        PosScheme::Learned => {
            let mut rng = Rng::derive(seed, 0x504f_5345);
            (0..dim * h * w).map(|_| 0.02 * rng.normal()).collect()
        }
    };
    Ok(PositionalEmbedding {
        values: Param::new(PositionalEmbedding::PARAM_NAME, vec![dim, h, w], value),
        scheme,
        height: h,
        width: w,
    })
}

/// Elementwise `features + embedding`, keeping the feature metadata.
pub fn fuse(features: &FeatureGrid, emb: &PositionalEmbedding) -> Result<FeatureGrid> {
    let (d, h, w) = features.values.shape();
    if (emb.embed_dim(), emb.height, emb.width) != (d, h, w) {
        return Err(Error::ShapeMismatch {
            left: format!("features {d}x{h}x{w}"),
            right: format!("embedding {}x{}x{}", emb.embed_dim(), emb.height, emb.width),
        });
    }
    let mut values = features.values.clone();
    for (v, e) in values.as_mut_slice().iter_mut().zip(&emb.values.value) {
        *v += e;
    }
    Ok(FeatureGrid {
        values,
        patch_size: features.patch_size,
        source_shape: features.source_shape,
    })
}

/// Wraps a raw `D × h × w` tensor as a feature grid with unit patches.
pub fn grid_from_tensor(values: Tensor3) -> FeatureGrid {
    let shape = (values.height(), values.width());
    FeatureGrid {
        values,
        patch_size: 1,
        source_shape: shape,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_sin_zero_cos_one() {
        let e = make_pos_embedding(4, 4, 16, PosScheme::SinCos2d, 0).unwrap();
        for k in 0..4 {
            assert_eq!(e.get(k, 0, 0), 0.0);
            assert_eq!(e.get(4 + k, 0, 0), 1.0);
            assert_eq!(e.get(8 + k, 0, 0), 0.0);
            assert_eq!(e.get(12 + k, 0, 0), 1.0);
        }
    }

    #[test]
    fn positions_are_pairwise_distinct() {
        let e = make_pos_embedding(16, 16, 384, PosScheme::SinCos2d, 0).unwrap();
        let vecs: alloc::vec::Vec<alloc::vec::Vec<f64>> = (0..256)
            .map(|t| (0..384).map(|d| e.get(d, t / 16, t % 16)).collect())
            .collect();
        let mut min = f64::INFINITY;
        for i in 0..256 {
            for j in i + 1..256 {
                let dist: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                min = min.min(dist);
            }
        }
        assert!(min > 0.0);
        assert!(e.values.value.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_and_separable() {
        let a = make_pos_embedding(5, 7, 8, PosScheme::SinCos2d, 1).unwrap();
        let b = make_pos_embedding(5, 7, 8, PosScheme::SinCos2d, 2).unwrap();
        assert_eq!(a, b);
        // row channels depend only on the row, column channels only on the column
        for d in 0..4 {
            for r in 0..5 {
                for c in 1..7 {
                    assert_eq!(a.get(d, r, c), a.get(d, r, 0));
                }
            }
        }
        for d in 4..8 {
            for c in 0..7 {
                for r in 1..5 {
                    assert_eq!(a.get(d, r, c), a.get(d, 0, c));
                }
            }
        }
    }

    #[test]
    fn rejects_dim_not_multiple_of_four() {
        assert!(make_pos_embedding(2, 2, 6, PosScheme::SinCos2d, 0).is_err());
        assert!(make_pos_embedding(2, 2, 6, PosScheme::Learned, 0).is_ok());
    }

    #[test]
    fn fuse_hand_table() {
        let f = grid_from_tensor(
            Tensor3::from_vec(4, 2, 2, (0..16).map(|v| v as f64 * 0.5).collect()).unwrap(),
        );
        let e = PositionalEmbedding::from_param(
            Param::new("pos_embed", vec![4, 2, 2], (0..16).map(|v| 10.0 - v as f64).collect()),
            PosScheme::Learned,
        )
        .unwrap();
        let out = fuse(&f, &e).unwrap();
        // v * 0.5 + (10 - v) = 10 - 0.5 v
        let expected: alloc::vec::Vec<f64> = (0..16).map(|v| 10.0 - 0.5 * v as f64).collect();
        assert_eq!(out.values.as_slice(), &expected[..]);
    }

    #[test]
    fn fuse_shape_mismatch_names_both() {
        let f = grid_from_tensor(Tensor3::zeros(4, 2, 3));
        let e = make_pos_embedding(2, 2, 4, PosScheme::SinCos2d, 0).unwrap();
        match fuse(&f, &e) {
            Err(Error::ShapeMismatch { left, right }) => {
                assert!(left.contains("4x2x3") && right.contains("4x2x2"));
            }
            other => panic!("{other:?}"),
        }
    }
}
