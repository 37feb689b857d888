//! Sliding-window inference with coverage-normalized assembly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::augment::Normalization;
use crate::density::{mass_preserving_resize, DensityMap, DensityMode};
use crate::model::CountingModel;
use crate::resample::resize;
use crate::{Error, Result, Tensor3};

/// Anything that maps a normalized square image to a density map.
pub trait DensityModel: Sync {
    /// Side of the square input expected by [`Self::predict`].
    fn input_side(&self) -> usize;

    fn normalization(&self) -> Normalization {
        Normalization::IMAGENET
    }

    fn predict(&self, normalized: &Tensor3) -> Result<DensityMap>;
}

impl DensityModel for CountingModel {
    fn input_side(&self) -> usize {
        self.config().input_side
    }

    fn normalization(&self) -> Normalization {
        self.config().normalization
    }

    fn predict(&self, normalized: &Tensor3) -> Result<DensityMap> {
        self.forward(normalized)
    }
}

/// Window origins over an image plus how many windows cover each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub window: usize,
    pub stride: usize,
    /// `(x, y)` top-left corners, row-major.
    pub origins: Vec<(usize, usize)>,
    /// Row-major `height × width` window counts.
    pub coverage: Vec<u32>,
    /// Shape the windows tile, after any upscaling.
    pub height: usize,
    pub width: usize,
    /// Shape of the image the plan was requested for.
    pub source_shape: (usize, usize),
}

impl WindowPlan {
    /// Whether the planned shape differs from the source shape.
    pub fn is_rescaled(&self) -> bool {
        (self.height, self.width) != self.source_shape
    }

    pub fn coverage_at(&self, y: usize, x: usize) -> u32 {
        self.coverage[y * self.width + x]
    }
}

/// `0, stride, 2·stride, …` with the last origin clamped to `side - window`.
pub fn axis_origins(side: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = side.saturating_sub(window);
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        let v = o.min(last);
        if out.last() != Some(&v) {
            out.push(v);
        }
        if v == last {
            break;
        }
        o += stride;
    }
    out
}

/// Shape after upscaling so both sides are at least `window`, preserving
/// aspect ratio.
fn upscaled_shape(height: usize, width: usize, window: usize) -> (usize, usize) {
    let short = height.min(width);
    if short >= window {
        return (height, width);
    }
    let s = window as f64 / short as f64;
    let h = libm::round(height as f64 * s) as usize;
    let w = libm::round(width as f64 * s) as usize;
    (h.max(window), w.max(window))
}

pub fn plan_windows(height: usize, width: usize, window: usize, stride: usize) -> Result<WindowPlan> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid(format!("window ({window}) and stride ({stride}) must be positive")));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!("cannot plan windows over a {height}x{width} image")));
    }
    let (h, w) = upscaled_shape(height, width, window);
    let xs = axis_origins(w, window, stride);
    let ys = axis_origins(h, window, stride);
    let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let mut coverage = vec![0u32; h * w];
    for &(x, y) in &origins {
        for row in coverage[y * w..(y + window) * w].chunks_mut(w) {
            row[x..x + window].iter_mut().for_each(|c| *c += 1);
        }
    }
    Ok(WindowPlan {
        window,
        stride,
        origins,
        coverage,
        height: h,
        width: w,
        source_shape: (height, width),
    })
}

/// One predicted window, already at `window × window`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileResult {
    pub origin: (usize, usize),
    pub density: DensityMap,
}

/// Sums tiles into a plan-sized buffer and divides by coverage.
pub fn assemble(plan: &WindowPlan, tiles: &[TileResult]) -> Result<DensityMap> {
    let (h, w, k) = (plan.height, plan.width, plan.window);
    let mut acc = vec![0.0; h * w];
    for t in tiles {
        if t.density.shape() != (k, k) {
            return Err(Error::shape((k, k), t.density.shape()));
        }
        let (x, y) = t.origin;
        if x + k > w || y + k > h {
            return Err(Error::CropOutOfBounds {
                x,
                y,
                size: k,
                width: w,
                height: h,
            });
        }
        for (r, src) in t.density.values().chunks(k).enumerate() {
            let dst = &mut acc[(y + r) * w + x..(y + r) * w + x + k];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
    for (v, &c) in acc.iter_mut().zip(&plan.coverage) {
        if c == 0 {
            return Err(Error::invalid("plan has an uncovered pixel"));
        }
        *v /= c as f64;
    }
    DensityMap::from_vec(h, w, acc, DensityMode::Predicted)
}

/// Where resizing happens relative to windowing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// Windows are cut from the native-resolution image, then each is
    /// resized to the model input side.
    #[default]
    Native,
    /// The whole image is first resized so its short side equals the
    /// window, then windowed.
    ResizeFirst,
}

impl WindowMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Native => "native",
            Self::ResizeFirst => "resize-first",
        }
    }
}

impl core::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(Self::Native),
            "resize-first" | "resize_first" => Ok(Self::ResizeFirst),
            _ => Err(Error::invalid(format!("unknown window mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceConfig {
    pub window: usize,
    pub stride: usize,
    pub mode: WindowMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            window: 256,
            stride: 128,
            mode: WindowMode::Native,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TiledPrediction {
    /// Density at the source image shape.
    pub density: DensityMap,
    pub count: f64,
    pub plan: WindowPlan,
}

/// Counts objects in an unnormalized `3 × H × W` image in `[0, 1]`.
///
/// When the image had to be rescaled for windowing, the assembled density
/// is mass-preservingly resized back to the source shape, so the count is
/// that of the rescaled image.
pub fn infer_tiled(image: &Tensor3, model: &dyn DensityModel, config: &InferenceConfig) -> Result<TiledPrediction> {
    if image.channels() != 3 {
        return Err(Error::shape("3 channels", image.channels()));
    }
    let (h, w) = (image.height(), image.width());
    let plan = match config.mode {
        WindowMode::Native => plan_windows(h, w, config.window, config.stride)?,
        WindowMode::ResizeFirst => {
            let short = h.min(w).max(1);
            let s = config.window as f64 / short as f64;
            let rh = (libm::round(h as f64 * s) as usize).max(config.window);
            let rw = (libm::round(w as f64 * s) as usize).max(config.window);
            let mut p = plan_windows(rh, rw, config.window, config.stride)?;
            p.source_shape = (h, w);
            p
        }
    };
    let working = if plan.is_rescaled() {
        resize(image, plan.height, plan.width)?
    } else {
        image.clone()
    };
    let tiles = crate::par::map_indexed(plan.origins.len(), |i| predict_tile(&working, plan.origins[i], &plan, model));
    let tiles = tiles.into_iter().collect::<Result<Vec<_>>>()?;
    let assembled = assemble(&plan, &tiles)?;
    let density = if plan.is_rescaled() {
        mass_preserving_resize(&assembled, plan.source_shape)?
    } else {
        assembled
    };
    let count = density.count();
    Ok(TiledPrediction { density, count, plan })
}

fn predict_tile(image: &Tensor3, origin: (usize, usize), plan: &WindowPlan, model: &dyn DensityModel) -> Result<TileResult> {
    let (x, y) = origin;
    let k = plan.window;
    let side = model.input_side();
    let mut crop = image.crop(x, y, k, k)?;
    if side != k {
        crop = resize(&crop, side, side)?;
    }
    model.normalization().apply(&mut crop);
    let pred = model.predict(&crop)?;
    if !pred.is_finite() {
        return Err(Error::NonFiniteTile { x, y });
    }
    let mut density = mass_preserving_resize(&pred, (k, k))?;
    density.mode = DensityMode::Predicted;
    Ok(TileResult { origin, density })
}
