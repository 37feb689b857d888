//! Image decoding and density visualisation.
//!
//! Density maps are written as 16-bit grayscale PNGs, min-max scaled, with a
//! text sidecar recording the affine map back to density values so that
//! the integral can be recovered.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dinocount_core::density::{DensityMap, DensityMode};
use dinocount_core::Tensor3;
use image::{ImageBuffer, Luma, Rgb, RgbImage};

use crate::{Error, Result};

/// Decodes any supported image into a `3 × H × W` tensor in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor3> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor3 {
    let (w, h) = img.dimensions();
    Tensor3::from_fn(3, h as usize, w as usize, |c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
    })
}

pub fn tensor_to_rgb(t: &Tensor3) -> RgbImage {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    RgbImage::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([q(t.get(0, y, x)), q(t.get(1, y, x)), q(t.get(2, y, x))])
    })
}

pub fn save_rgb(path: &Path, t: &Tensor3) -> Result<()> {
    ensure_parent(path)?;
    tensor_to_rgb(t).save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(Error::io(p)),
        _ => Ok(()),
    }
}

/// Affine quantisation record for a density PNG: `value = min + q · scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySidecar {
    pub min: f64,
    pub max: f64,
    pub scale: f64,
    /// Exact sum of the unquantised map.
    pub sum: f64,
    pub height: usize,
    pub width: usize,
}

impl DensitySidecar {
    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "min {}", self.min);
        let _ = writeln!(s, "max {}", self.max);
        let _ = writeln!(s, "scale {}", self.scale);
        let _ = writeln!(s, "sum {}", self.sum);
        let _ = writeln!(s, "height {}", self.height);
        let _ = writeln!(s, "width {}", self.width);
        s
    }

    fn parse(path: &Path, text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<String> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
                .map(str::to_owned)
                .ok_or_else(|| Error::format(path, format!("missing `{key}`")))
        };
        let f = |s: String| s.parse::<f64>().map_err(|e| Error::format(path, e.to_string()));
        let u = |s: String| s.parse::<usize>().map_err(|e| Error::format(path, e.to_string()));
        Ok(Self {
            min: f(get("min")?)?,
            max: f(get("max")?)?,
            scale: f(get("scale")?)?,
            sum: f(get("sum")?)?,
            height: u(get("height")?)?,
            width: u(get("width")?)?,
        })
    }
}

/// Sidecar path for a density PNG: same stem, `.txt` extension.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("txt")
}

pub fn save_density_png(path: &Path, map: &DensityMap) -> Result<DensitySidecar> {
    let (h, w) = map.shape();
    let v = map.values();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { (max - min) / 65535.0 } else { 0.0 };
    let q: Vec<u16> = v
        .iter()
        .map(|&x| if scale > 0.0 { ((x - min) / scale).round().clamp(0.0, 65535.0) as u16 } else { 0 })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, q).ok_or_else(|| Error::format(path, "density buffer size"))?;
    ensure_parent(path)?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let side = DensitySidecar {
        min,
        max,
        scale,
        sum: map.count(),
        height: h,
        width: w,
    };
    let sp = sidecar_path(path);
    std::fs::write(&sp, side.render()).map_err(Error::io(&sp))?;
    Ok(side)
}

/// Reads a density PNG back through its sidecar.
pub fn load_density_png(path: &Path) -> Result<(DensityMap, DensitySidecar)> {
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(Error::io(&sp))?;
    let side = DensitySidecar::parse(&sp, &text)?;
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma16();
    if (img.height() as usize, img.width() as usize) != (side.height, side.width) {
        return Err(Error::format(path, "image size disagrees with sidecar"));
    }
    let values = img.pixels().map(|p| side.min + p[0] as f64 * side.scale).collect();
    let map = DensityMap::from_vec(side.height, side.width, values, DensityMode::Predicted)?;
    Ok((map, side))
}

/// Jet colormap on `t ∈ [0, 1]`.
pub fn jet(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let ch = |c: f64| (1.5 - (4.0 * t - c).abs()).clamp(0.0, 1.0);
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Blends `image` with a jet-coloured density resized to the image shape.
pub fn overlay(image: &Tensor3, density: &DensityMap, alpha: f64) -> Result<Tensor3> {
    let (h, w) = (image.height(), image.width());
    let d = if density.shape() == (h, w) {
        density.values().to_vec()
    } else {
        let t = Tensor3::from_vec(1, density.height(), density.width(), density.values().to_vec())?;
        dinocount_core::resample::resize(&t, h, w)?.into_vec()
    };
    let max = d.iter().copied().fold(0.0, f64::max);
    let alpha = alpha.clamp(0.0, 1.0);
    Ok(Tensor3::from_fn(3, h, w, |c, y, x| {
        let t = if max > 0.0 { d[y * w + x].max(0.0) / max } else { 0.0 };
        let a = alpha * t.sqrt();
        (1.0 - a) * image.get(c, y, x) + a * jet(t)[c]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_endpoints() {
        assert_eq!(jet(0.0), [0.0, 0.0, 0.5]);
        assert_eq!(jet(1.0), [0.5, 0.0, 0.0]);
        assert_eq!(jet(0.5), [0.5, 1.0, 0.5]);
    }
}
