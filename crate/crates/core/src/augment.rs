//! Annotation-consistent augmentation.
//!
//! Pixels and points always go through the same geometric transform. Points
//! that leave the frame are dropped, and density targets are rebuilt from
//! the surviving points afterwards rather than transformed as rasters.
//!
//! Transform order: horizontal flip, vertical flip, rotation about the image
//! centre, square crop, per-channel normalization.

use alloc::format;
use alloc::vec::Vec;

use crate::resample;
use crate::rng::Rng;
use crate::{Error, ImageSample, Point, Result, Tensor3};

/// Largest rotation magnitude accepted, in degrees.
pub const MAX_ROTATION_DEG: f64 = 30.0;

/// ImageNet channel statistics used by the DINOv2 preprocessing.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Square crop with top-left corner `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Normalization {
    pub const IDENTITY: Self = Self {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    pub const IMAGENET: Self = Self {
        mean: IMAGENET_MEAN,
        std: IMAGENET_STD,
    };

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("normalization std must be positive: {:?}", self.std)));
        }
        Ok(())
    }

    pub fn apply(&self, pixels: &mut Tensor3) {
        for c in 0..pixels.channels().min(3) {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in pixels.channel_mut(c) {
                *v = (*v - m) / s;
            }
        }
    }
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IMAGENET
    }
}

/// A concrete augmentation to apply to one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub hflip: bool,
    pub vflip: bool,
    /// Rotation in degrees; points map as `c + R(θ)(p - c)` with
    /// `R = [[cos θ, -sin θ], [sin θ, cos θ]]` in `(x, y)` pixel coordinates.
    pub rotation_deg: f64,
    pub crop: Option<Crop>,
    pub normalize: Normalization,
}

impl AugmentSpec {
    pub const IDENTITY: Self = Self {
        hflip: false,
        vflip: false,
        rotation_deg: 0.0,
        crop: None,
        normalize: Normalization::IDENTITY,
    };

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.rotation_deg.abs() <= MAX_ROTATION_DEG) {
            return Err(Error::invalid(format!(
                "rotation {}° exceeds ±{MAX_ROTATION_DEG}°",
                self.rotation_deg
            )));
        }
        if let Some(c) = self.crop {
            if c.size == 0 || c.x + c.size > width || c.y + c.size > height {
                return Err(Error::CropOutOfBounds {
                    x: c.x,
                    y: c.y,
                    size: c.size,
                    width,
                    height,
                });
            }
        }
        self.normalize.validate()
    }
}

/// Applies `spec` to pixels and points together.
pub fn augment_sample(sample: &ImageSample, spec: &AugmentSpec) -> Result<ImageSample> {
    let (w, h) = (sample.width(), sample.height());
    spec.validate(w, h)?;
    let mut pixels = sample.pixels.clone();
    let mut points = sample.points.clone();

    if spec.hflip {
        pixels = flip(&pixels, true);
        for p in &mut points {
            p.x = (w as f64 - 1.0 - p.x).max(0.0);
        }
    }
    if spec.vflip {
        pixels = flip(&pixels, false);
        for p in &mut points {
            p.y = (h as f64 - 1.0 - p.y).max(0.0);
        }
    }
    if spec.rotation_deg != 0.0 {
        let theta = spec.rotation_deg.to_radians();
        pixels = rotate(&pixels, theta);
        points = points
            .into_iter()
            .map(|p| rotate_point(p, theta, w, h))
            .filter(|p| p.in_bounds(w, h))
            .collect();
    }
    if let Some(c) = spec.crop {
        pixels = pixels.crop(c.x, c.y, c.size, c.size)?;
        points = points
            .into_iter()
            .map(|p| Point::new(p.x - c.x as f64, p.y - c.y as f64))
            .filter(|p| p.in_bounds(c.size, c.size))
            .collect();
    }
    spec.normalize.apply(&mut pixels);

    Ok(ImageSample {
        id: sample.id.clone(),
        pixels,
        points,
        split: sample.split,
    })
}

/// Maps a point through the rotation used by [`augment_sample`].
pub fn rotate_point(p: Point, theta: f64, width: usize, height: usize) -> Point {
    let (cx, cy) = center(width, height);
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let (dx, dy) = (p.x - cx, p.y - cy);
    Point::new(cx + c * dx - s * dy, cy + s * dx + c * dy)
}

fn center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

fn flip(src: &Tensor3, horizontal: bool) -> Tensor3 {
    let (_, h, w) = src.shape();
    Tensor3::from_fn(src.channels(), h, w, |c, y, x| {
        if horizontal {
            src.get(c, y, w - 1 - x)
        } else {
            src.get(c, h - 1 - y, x)
        }
    })
}

/// Inverse-maps every output pixel and samples bilinearly; samples outside
/// the source read as 0.
fn rotate(src: &Tensor3, theta: f64) -> Tensor3 {
    let (_, h, w) = src.shape();
    let (cx, cy) = center(w, h);
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let sample = |ch: usize, sx: f64, sy: f64| -> f64 {
        let x0 = libm::floor(sx);
        let y0 = libm::floor(sy);
        let (fx, fy) = (sx - x0, sy - y0);
        let mut acc = 0.0;
        for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let (xi, yi) = (x0 + ox, y0 + oy);
                if wx * wy != 0.0 && xi >= 0.0 && yi >= 0.0 && xi < w as f64 && yi < h as f64 {
                    acc += wx * wy * src.get(ch, yi as usize, xi as usize);
                }
            }
        }
        acc
    };
    Tensor3::from_fn(src.channels(), h, w, |ch, y, x| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // inverse rotation R(-θ)
        let sx = cx + c * dx + s * dy;
        let sy = cy - s * dx + c * dy;
        sample(ch, sx, sy)
    })
}

/// Resizes the image to `height × width` and scales the points with it.
pub fn resize_sample(sample: &ImageSample, height: usize, width: usize) -> Result<ImageSample> {
    let pixels = resample::resize(&sample.pixels, height, width)?;
    let (sx, sy) = (
        width as f64 / sample.width() as f64,
        height as f64 / sample.height() as f64,
    );
    let points = sample
        .points
        .iter()
        .map(|p| Point::new(p.x * sx, p.y * sy))
        .filter(|p| p.in_bounds(width, height))
        .collect();
    Ok(ImageSample {
        id: sample.id.clone(),
        pixels,
        points,
        split: sample.split,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    Center,
    Random,
}

impl CropMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CropMode::Center => "center",
            CropMode::Random => "random",
        }
    }
}

impl core::str::FromStr for CropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(CropMode::Center),
            "random" => Ok(CropMode::Random),
            other => Err(Error::invalid(format!("unknown crop mode `{other}`"))),
        }
    }
}

/// Distribution over [`AugmentSpec`]s used during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub max_rotation_deg: f64,
    /// Square crop side; `None` keeps the full frame.
    pub crop_size: Option<usize>,
    pub crop_mode: CropMode,
    pub normalize: Normalization,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            max_rotation_deg: MAX_ROTATION_DEG,
            crop_size: Some(224),
            crop_mode: CropMode::Center,
            normalize: Normalization::IMAGENET,
        }
    }
}

impl AugmentPolicy {
    /// No geometric change, normalization only.
    pub fn normalize_only(normalize: Normalization) -> Self {
        Self {
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            max_rotation_deg: 0.0,
            crop_size: None,
            crop_mode: CropMode::Center,
            normalize,
        }
    }

    /// Draws a concrete spec for a `width × height` image.
    pub fn sample(&self, width: usize, height: usize, seed: u64) -> Result<AugmentSpec> {
        let mut rng = Rng::new(seed);
        let hflip = rng.bernoulli(self.hflip_prob);
        let vflip = rng.bernoulli(self.vflip_prob);
        let max = self.max_rotation_deg.min(MAX_ROTATION_DEG);
        let rotation_deg = if max > 0.0 { rng.range(-max, max) } else { 0.0 };
        let crop = match self.crop_size {
            None => None,
            Some(size) => {
                if size > width || size > height {
                    return Err(Error::CropOutOfBounds {
                        x: 0,
                        y: 0,
                        size,
                        width,
                        height,
                    });
                }
                let (x, y) = match self.crop_mode {
                    CropMode::Center => ((width - size) / 2, (height - size) / 2),
                    CropMode::Random => (rng.below(width - size + 1), rng.below(height - size + 1)),
                };
                Some(Crop { x, y, size })
            }
        };
        Ok(AugmentSpec {
            hflip,
            vflip,
            rotation_deg,
            crop,
            normalize: self.normalize,
        })
    }
}

/// Points surviving `spec`, without touching pixels. Matches the point
/// list produced by [`augment_sample`].
pub fn transform_points(points: &[Point], spec: &AugmentSpec, width: usize, height: usize) -> Vec<Point> {
    let theta = spec.rotation_deg.to_radians();
    points
        .iter()
        .map(|&p| {
            let mut p = p;
            if spec.hflip {
                p.x = (width as f64 - 1.0 - p.x).max(0.0);
            }
            if spec.vflip {
                p.y = (height as f64 - 1.0 - p.y).max(0.0);
            }
            p
        })
        .map(|p| if theta != 0.0 { rotate_point(p, theta, width, height) } else { p })
        .filter(|p| p.in_bounds(width, height))
        .filter_map(|p| match spec.crop {
            None => Some(p),
            Some(c) => {
                let q = Point::new(p.x - c.x as f64, p.y - c.y as f64);
                q.in_bounds(c.size, c.size).then_some(q)
            }
        })
        .collect()
}
