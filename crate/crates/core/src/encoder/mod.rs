//! Patch feature extraction.
//!
//! An encoder turns an `H × W` normalized image into a [`FeatureGrid`] of
//! `h × w` tokens with `D` channels, `h = H / patch` and `w = W / patch`.
//! Tokens are ordered row-major (top-left to bottom-right): token `t` sits
//! at grid row `t / w`, column `t % w`. Class and register tokens emitted by
//! a transformer backbone are dropped, so only spatial tokens remain.

use alloc::format;
use alloc::string::String;

use crate::{Error, Result, Tensor3};

mod stub;
pub mod vit;

pub use stub::{stub_project, StubEncoder};
pub use vit::{VisionTransformer, VitConfig};

/// Encoder output: a `D × h × w` grid plus the geometry it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub values: Tensor3,
    pub patch_size: usize,
    /// `(H, W)` of the encoded image.
    pub source_shape: (usize, usize),
}

impl FeatureGrid {
    pub fn embed_dim(&self) -> usize {
        self.values.channels()
    }

    /// `(h, w)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.values.height(), self.values.width())
    }

    /// Number of spatial tokens `M = h · w`.
    pub fn tokens(&self) -> usize {
        self.values.plane_len()
    }

    /// Feature vector of the token at grid position `(row, col)`.
    pub fn token(&self, row: usize, col: usize) -> alloc::vec::Vec<f64> {
        (0..self.embed_dim()).map(|d| self.values.get(d, row, col)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderBackend {
    PretrainedDinov2,
    Stub,
}

impl EncoderBackend {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderBackend::PretrainedDinov2 => "pretrained_dinov2",
            EncoderBackend::Stub => "stub",
        }
    }
}

impl core::str::FromStr for EncoderBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained_dinov2" | "dinov2" => Ok(EncoderBackend::PretrainedDinov2),
            "stub" => Ok(EncoderBackend::Stub),
            other => Err(Error::invalid(format!("unknown encoder backend `{other}`"))),
        }
    }
}

/// DINOv2 ViT size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Small,
    Base,
    Large,
}

impl Variant {
    pub fn embed_dim(self) -> usize {
        match self {
            Variant::Small => 384,
            Variant::Base => 768,
            Variant::Large => 1024,
        }
    }

    pub fn num_heads(self) -> usize {
        match self {
            Variant::Small => 6,
            Variant::Base => 12,
            Variant::Large => 16,
        }
    }

    pub fn depth(self) -> usize {
        match self {
            Variant::Small | Variant::Base => 12,
            Variant::Large => 24,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Small => "small",
            Variant::Base => "base",
            Variant::Large => "large",
        }
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" | "s" | "vits14" => Ok(Variant::Small),
            "base" | "b" | "vitb14" => Ok(Variant::Base),
            "large" | "l" | "vitl14" => Ok(Variant::Large),
            other => Err(Error::invalid(format!("unknown encoder variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub backend: EncoderBackend,
    pub variant: Variant,
    pub patch_size: usize,
    /// Frozen encoders receive no gradient updates.
    pub frozen: bool,
    /// Local weight file for the pretrained backend.
    pub weights_path: Option<String>,
    /// Feature width of the stub backend when it should differ from the
    /// variant's; the pretrained backend always uses the variant width.
    pub embed_dim: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backend: EncoderBackend::PretrainedDinov2,
            variant: Variant::Small,
            patch_size: 14,
            frozen: true,
            weights_path: None,
            embed_dim: None,
        }
    }
}

impl EncoderConfig {
    pub fn stub(variant: Variant) -> Self {
        Self {
            backend: EncoderBackend::Stub,
            variant,
            ..Self::default()
        }
    }

    pub fn embed_dim(&self) -> usize {
        match (self.backend, self.embed_dim) {
            (EncoderBackend::Stub, Some(d)) => d,
            _ => self.variant.embed_dim(),
        }
    }

    /// `(h, w)` of the grid produced for an `H × W` input.
    pub fn grid_shape(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        check_divisible(height, width, self.patch_size)?;
        Ok((height / self.patch_size, width / self.patch_size))
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        match (self.backend, self.embed_dim) {
            (_, Some(0)) => Err(Error::invalid("embed dim must be positive")),
            (EncoderBackend::PretrainedDinov2, Some(d)) if d != self.variant.embed_dim() => Err(Error::invalid(format!(
                "the pretrained {} backbone has width {}, not {d}",
                self.variant.as_str(),
                self.variant.embed_dim()
            ))),
            _ => Ok(()),
        }
    }
}

pub(crate) fn check_divisible(height: usize, width: usize, patch: usize) -> Result<()> {
    if patch == 0 || height == 0 || width == 0 || !height.is_multiple_of(patch) || !width.is_multiple_of(patch) {
        return Err(Error::IndivisibleInput { height, width, patch });
    }
    Ok(())
}

/// A constructed encoder. Immutable during inference.
#[derive(Debug, Clone)]
pub enum Encoder {
    Stub(StubEncoder),
    Vit(VisionTransformer),
}

impl Encoder {
    pub fn embed_dim(&self) -> usize {
        match self {
            Encoder::Stub(s) => s.embed_dim(),
            Encoder::Vit(v) => v.config().embed_dim,
        }
    }

    pub fn patch_size(&self) -> usize {
        match self {
            Encoder::Stub(s) => s.patch_size(),
            Encoder::Vit(v) => v.config().patch_size,
        }
    }

    pub fn encode(&self, image: &Tensor3) -> Result<FeatureGrid> {
        match self {
            Encoder::Stub(s) => s.encode(image),
            Encoder::Vit(v) => v.encode(image),
        }
    }
}
