use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense channel-major array of shape `channels × height × width`.
///
/// Images are 3-channel tensors; density maps and feature grids reuse the
/// same storage. Element `(c, y, x)` lives at `(c * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape((channels, height, width), data.len()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Copy of the `size`×`size` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, size_w: usize, size_h: usize) -> Result<Self> {
        if x + size_w > self.width || y + size_h > self.height {
            return Err(Error::CropOutOfBounds {
                x,
                y,
                size: size_w.max(size_h),
                width: self.width,
                height: self.height,
            });
        }
        let mut out = Self::zeros(self.channels, size_h, size_w);
        for c in 0..self.channels {
            for row in 0..size_h {
                let src = self.index(c, y + row, x);
                let dst = out.index(c, row, 0);
                out.data[dst..dst + size_w].copy_from_slice(&self.data[src..src + size_w]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let t = Tensor3::from_fn(2, 3, 4, |c, y, x| (c * 100 + y * 10 + x) as f64);
        assert_eq!(t.get(1, 2, 3), 123.0);
        assert_eq!(t.as_slice()[t.index(1, 2, 3)], 123.0);
        assert_eq!(t.channel(1)[0], 100.0);
    }

    #[test]
    fn crop_bounds() {
        let t = Tensor3::from_fn(1, 4, 4, |_, y, x| (y * 4 + x) as f64);
        let c = t.crop(1, 2, 3, 2).unwrap();
        assert_eq!(c.as_slice(), &[9.0, 10.0, 11.0, 13.0, 14.0, 15.0]);
        assert!(t.crop(2, 0, 3, 3).is_err());
    }

    #[test]
    fn from_vec_checks_len() {
        assert!(Tensor3::from_vec(1, 2, 2, vec![0.0; 3]).is_err());
    }
}
