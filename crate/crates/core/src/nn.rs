//! Dense layers with hand-written forward and backward passes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::{Error, Result, Tensor3};

/// A named trainable array. Names are stable hierarchical keys such as
/// `decoder.stage1.conv.weight`; checkpoints are keyed by them.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        Self {
            name: name.into(),
            shape,
            value,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Square-kernel convolution, stride 1, "same" zero padding.
///
/// Weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Conv2d {
    /// He (fan-in) normal initialization; zero bias.
    pub fn new(prefix: &str, in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = libm::sqrt(2.0 / fan_in);
        let n = out_channels * in_channels * kernel * kernel;
        let w = (0..n).map(|_| rng.normal() * std).collect();
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: Param::new(
                format!("{prefix}.weight"),
                vec![out_channels, in_channels, kernel, kernel],
                w,
            ),
            bias: Param::zeros(format!("{prefix}.bias"), vec![out_channels]),
        }
    }

    fn taps(&self) -> usize {
        self.kernel * self.kernel
    }

    fn check_input(&self, input: &Tensor3) -> Result<()> {
        if input.channels() != self.in_channels {
            return Err(Error::shape(
                format!("{} expects {} channels", self.weight.name, self.in_channels),
                input.channels(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        self.check_input(input)?;
        let (_, h, w) = input.shape();
        let pad = (self.kernel / 2) as isize;
        let k = self.kernel;
        let taps = self.taps();
        let mut out = Tensor3::zeros(self.out_channels, h, w);
        crate::par::for_each_chunk(out.as_mut_slice(), h * w, |co, plane| {
            plane.fill(self.bias.value[co]);
            for ci in 0..self.in_channels {
                let src = input.channel(ci);
                let wbase = (co * self.in_channels + ci) * taps;
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let wv = self.weight.value[wbase + ky * k + kx];
                        shifted_axpy(plane, src, h, w, dy, dx, wv);
                    }
                }
            }
        });
        Ok(out)
    }

    /// Returns `(grad_input, grad_weight, grad_bias)`.
    pub fn backward(&self, input: &Tensor3, grad_out: &Tensor3) -> Result<(Tensor3, Vec<f64>, Vec<f64>)> {
        self.check_input(input)?;
        let (_, h, w) = input.shape();
        if grad_out.shape() != (self.out_channels, h, w) {
            return Err(Error::shape(grad_out.shape(), (self.out_channels, h, w)));
        }
        let pad = (self.kernel / 2) as isize;
        let k = self.kernel;
        let taps = self.taps();

        let grad_bias: Vec<f64> = (0..self.out_channels)
            .map(|co| grad_out.channel(co).iter().sum())
            .collect();

        // dW[co][ci][ky][kx] = Σ g[co](y, x) · in[ci](y + dy, x + dx)
        let mut grad_weight = vec![0.0; self.weight.len()];
        crate::par::for_each_chunk(&mut grad_weight, self.in_channels * taps, |co, gw| {
            let g = grad_out.channel(co);
            for ci in 0..self.in_channels {
                let src = input.channel(ci);
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        gw[ci * taps + ky * k + kx] = shifted_dot(g, src, h, w, dy, dx);
                    }
                }
            }
        });

        // dIn[ci](y + dy, x + dx) += W[co][ci][ky][kx] · g[co](y, x)
        let mut grad_in = Tensor3::zeros(self.in_channels, h, w);
        crate::par::for_each_chunk(grad_in.as_mut_slice(), h * w, |ci, plane| {
            for co in 0..self.out_channels {
                let g = grad_out.channel(co);
                let wbase = (co * self.in_channels + ci) * taps;
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let wv = self.weight.value[wbase + ky * k + kx];
                        shifted_axpy(plane, g, h, w, -dy, -dx, wv);
                    }
                }
            }
        });
        Ok((grad_in, grad_weight, grad_bias))
    }
}

/// `dst(y, x) += a · src(y + dy, x + dx)` over the overlap of the planes.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize, a: f64) {
    let (y0, y1) = overlap(h, dy);
    let (x0, x1) = overlap(w, dx);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s0 = (x0 as isize + dx) as usize;
        let s = &src[sy * w + s0..sy * w + s0 + (x1 - x0)];
        for (d, s) in d.iter_mut().zip(s) {
            *d += a * s;
        }
    }
}

/// `Σ a(y, x) · b(y + dy, x + dx)` over the overlap of the planes.
#[inline]
fn shifted_dot(a: &[f64], b: &[f64], h: usize, w: usize, dy: isize, dx: isize) -> f64 {
    let (y0, y1) = overlap(h, dy);
    let (x0, x1) = overlap(w, dx);
    let mut acc = 0.0;
    if x0 >= x1 {
        return acc;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let s0 = (x0 as isize + dx) as usize;
        let ra = &a[y * w + x0..y * w + x1];
        let rb = &b[sy * w + s0..sy * w + s0 + (x1 - x0)];
        acc += ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>();
    }
    acc
}

/// Range of `i` with `0 <= i < n` and `0 <= i + d < n`.
#[inline]
fn overlap(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo.min(n), hi.min(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softplus,
    None,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => {
                // log(1 + e^x) without overflow
                if x > 30.0 {
                    x
                } else {
                    libm::log1p(libm::exp(x))
                }
            }
            Activation::None => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + libm::exp(-x)),
            Activation::None => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::None => "none",
        }
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            "none" => Ok(Activation::None),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}
