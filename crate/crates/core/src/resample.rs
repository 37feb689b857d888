//! Separable bilinear resampling with a triangle filter.
//!
//! Upsampling reproduces half-pixel-centred bilinear interpolation
//! (`align_corners = false`). Downsampling widens the filter support by the
//! scale factor so that every source pixel contributes to some output pixel;
//! a plain two-tap bilinear downsample can skip pixels entirely and lose
//! density mass.
//!
//! [`Resampler`] is a fixed linear operator, so it also exposes its adjoint
//! for backpropagation through upsampling layers.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor3};

/// Per-output-index sparse weights along one axis.
#[derive(Debug, Clone, PartialEq)]
struct AxisKernel {
    src_len: usize,
    taps: Vec<Vec<(usize, f64)>>,
}

impl AxisKernel {
    fn new(src_len: usize, dst_len: usize) -> Self {
        let scale = src_len as f64 / dst_len as f64;
        let support = scale.max(1.0);
        let taps = (0..dst_len)
            .map(|i| {
                let center = (i as f64 + 0.5) * scale;
                let lo = libm::floor(center - support).max(0.0) as usize;
                let hi = (libm::ceil(center + support) as usize).min(src_len);
                let mut taps: Vec<(usize, f64)> = (lo..hi)
                    .filter_map(|j| {
                        let t = (j as f64 + 0.5 - center) / support;
                        let w = 1.0 - t.abs();
                        (w > 0.0).then_some((j, w))
                    })
                    .collect();
                let total: f64 = taps.iter().map(|&(_, w)| w).sum();
                for tap in &mut taps {
                    tap.1 /= total;
                }
                taps
            })
            .collect();
        Self { src_len, taps }
    }

    fn dst_len(&self) -> usize {
        self.taps.len()
    }
}

/// Resize operator from `src_h × src_w` planes to `dst_h × dst_w` planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampler {
    rows: AxisKernel,
    cols: AxisKernel,
}

impl Resampler {
    pub fn new(src: (usize, usize), dst: (usize, usize)) -> Result<Self> {
        if src.0 == 0 || src.1 == 0 || dst.0 == 0 || dst.1 == 0 {
            return Err(Error::invalid(alloc::format!(
                "cannot resample {src:?} to {dst:?}: sides must be positive"
            )));
        }
        Ok(Self {
            rows: AxisKernel::new(src.0, dst.0),
            cols: AxisKernel::new(src.1, dst.1),
        })
    }

    pub fn src_shape(&self) -> (usize, usize) {
        (self.rows.src_len, self.cols.src_len)
    }

    pub fn dst_shape(&self) -> (usize, usize) {
        (self.rows.dst_len(), self.cols.dst_len())
    }

    /// Resample one plane (row-major, `src_h * src_w` values).
    pub fn apply_plane(&self, src: &[f64], dst: &mut [f64]) {
        let (sh, sw) = self.src_shape();
        let (dh, dw) = self.dst_shape();
        debug_assert_eq!(src.len(), sh * sw);
        debug_assert_eq!(dst.len(), dh * dw);
        // horizontal pass: sh × dw
        let mut tmp = vec![0.0; sh * dw];
        for y in 0..sh {
            let row = &src[y * sw..(y + 1) * sw];
            let out = &mut tmp[y * dw..(y + 1) * dw];
            for (o, taps) in out.iter_mut().zip(&self.cols.taps) {
                *o = taps.iter().map(|&(j, w)| w * row[j]).sum();
            }
        }
        // vertical pass
        for (y, taps) in self.rows.taps.iter().enumerate() {
            let out = &mut dst[y * dw..(y + 1) * dw];
            out.fill(0.0);
            for &(j, w) in taps {
                let row = &tmp[j * dw..(j + 1) * dw];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
    }

    /// Adjoint of [`Self::apply_plane`]: maps a `dst`-shaped gradient back to
    /// the `src` shape.
    pub fn adjoint_plane(&self, grad_dst: &[f64], grad_src: &mut [f64]) {
        let (sh, sw) = self.src_shape();
        let (dh, dw) = self.dst_shape();
        debug_assert_eq!(grad_dst.len(), dh * dw);
        debug_assert_eq!(grad_src.len(), sh * sw);
        let mut tmp = vec![0.0; sh * dw];
        for (y, taps) in self.rows.taps.iter().enumerate() {
            let g = &grad_dst[y * dw..(y + 1) * dw];
            for &(j, w) in taps {
                let t = &mut tmp[j * dw..(j + 1) * dw];
                for (t, &g) in t.iter_mut().zip(g) {
                    *t += w * g;
                }
            }
        }
        grad_src.fill(0.0);
        for y in 0..sh {
            let t = &tmp[y * dw..(y + 1) * dw];
            let out = &mut grad_src[y * sw..(y + 1) * sw];
            for (&g, taps) in t.iter().zip(&self.cols.taps) {
                for &(j, w) in taps {
                    out[j] += w * g;
                }
            }
        }
    }

    pub fn apply(&self, src: &Tensor3) -> Result<Tensor3> {
        if (src.height(), src.width()) != self.src_shape() {
            return Err(Error::shape((src.height(), src.width()), self.src_shape()));
        }
        let (dh, dw) = self.dst_shape();
        let mut out = Tensor3::zeros(src.channels(), dh, dw);
        crate::par::for_each_chunk(out.as_mut_slice(), dh * dw, |c, plane| {
            self.apply_plane(src.channel(c), plane);
        });
        Ok(out)
    }

    pub fn adjoint(&self, grad: &Tensor3) -> Result<Tensor3> {
        if (grad.height(), grad.width()) != self.dst_shape() {
            return Err(Error::shape((grad.height(), grad.width()), self.dst_shape()));
        }
        let (sh, sw) = self.src_shape();
        let mut out = Tensor3::zeros(grad.channels(), sh, sw);
        crate::par::for_each_chunk(out.as_mut_slice(), sh * sw, |c, plane| {
            self.adjoint_plane(grad.channel(c), plane);
        });
        Ok(out)
    }
}

/// Bilinear resize of every channel of `src` to `height × width`.
pub fn resize(src: &Tensor3, height: usize, width: usize) -> Result<Tensor3> {
    if (src.height(), src.width()) == (height, width) {
        return Ok(src.clone());
    }
    Resampler::new((src.height(), src.width()), (height, width))?.apply(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identity_when_same_shape() {
        let r = Resampler::new((5, 7), (5, 7)).unwrap();
        let mut rng = Rng::new(1);
        let src = Tensor3::from_fn(1, 5, 7, |_, _, _| rng.uniform());
        assert_eq!(r.apply(&src).unwrap(), src);
    }

    #[test]
    fn upsample_matches_half_pixel_bilinear() {
        // 1-D ramp [0, 1, 2, 3] upsampled ×2 with align_corners = false:
        // out[i] samples src at (i + 0.5) / 2 - 0.5, clamped to the edges
        let src = Tensor3::from_vec(1, 1, 4, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = resize(&src, 1, 8).unwrap();
        let expected = [0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0];
        for (a, b) in out.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn adjoint_identity() {
        // <A x, y> == <x, A^T y>
        let mut rng = Rng::new(7);
        for &(src, dst) in &[((4, 6), (8, 12)), ((9, 5), (4, 3)), ((16, 16), (14, 14))] {
            let r = Resampler::new(src, dst).unwrap();
            let x = Tensor3::from_fn(2, src.0, src.1, |_, _, _| rng.normal());
            let y = Tensor3::from_fn(2, dst.0, dst.1, |_, _, _| rng.normal());
            let ax = r.apply(&x).unwrap();
            let aty = r.adjoint(&y).unwrap();
            let lhs: f64 = ax.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.as_slice().iter().zip(aty.as_slice()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn downsample_touches_every_source_pixel() {
        let r = Resampler::new((64, 64), (7, 7)).unwrap();
        let ones = Tensor3::filled(1, 7, 7, 1.0);
        let reach = r.adjoint(&ones).unwrap();
        assert!(reach.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(Resampler::new((0, 3), (3, 3)).is_err());
    }
}
