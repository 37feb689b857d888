//! Density maps: training targets built from point annotations and
//! resampling that preserves the integral (the object count).

use alloc::vec;
use alloc::vec::Vec;

use crate::resample::Resampler;
use crate::{Error, Point, Result};

/// How a density map was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityMode {
    /// A unit impulse at the nearest pixel of each point.
    Impulse,
    /// A truncated Gaussian of the given standard deviation (pixels) per
    /// point, renormalized to unit mass.
    Gaussian { sigma: f64 },
    /// Model output.
    Predicted,
}

/// Single-channel nonnegative spatial field whose sum is an object count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    pub mode: DensityMode,
}

impl DensityMap {
    pub fn zeros(height: usize, width: usize, mode: DensityMode) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
            mode,
        }
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>, mode: DensityMode) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape((height, width), values.len()));
        }
        Ok(Self {
            height,
            width,
            values,
            mode,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// The count: the spatial sum of the map.
    pub fn count(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Builds the regression target for a set of in-bounds points.
///
/// Impulse mode adds 1 at the nearest pixel of each point, so the sum equals
/// the point count exactly. Gaussian mode centres a kernel on the subpixel
/// location, truncates it at `ceil(3σ)` pixels and at the frame border, and
/// renormalizes each kernel to unit mass.
pub fn build_density_target(
    points: &[Point],
    shape: (usize, usize),
    mode: DensityMode,
) -> Result<DensityMap> {
    let (height, width) = shape;
    if height == 0 || width == 0 {
        return Err(Error::invalid("density map sides must be positive"));
    }
    if let Some(p) = points.iter().find(|p| !p.in_bounds(width, height)) {
        return Err(Error::PointOutOfBounds {
            x: p.x,
            y: p.y,
            width,
            height,
        });
    }
    let mut map = DensityMap::zeros(height, width, mode);
    match mode {
        DensityMode::Impulse => {
            for p in points {
                let (x, y) = nearest_pixel(p, width, height);
                map.values[y * width + x] += 1.0;
            }
        }
        DensityMode::Gaussian { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(alloc::format!(
                    "gaussian sigma must be positive, got {sigma}"
                )));
            }
            let radius = libm::ceil(3.0 * sigma) as isize;
            let inv = 1.0 / (2.0 * sigma * sigma);
            let mut kernel = Vec::new();
            for p in points {
                let (cx, cy) = nearest_pixel(p, width, height);
                let x0 = (cx as isize - radius).max(0) as usize;
                let x1 = (cx as isize + radius).min(width as isize - 1) as usize;
                let y0 = (cy as isize - radius).max(0) as usize;
                let y1 = (cy as isize + radius).min(height as isize - 1) as usize;
                kernel.clear();
                let mut total = 0.0;
                for y in y0..=y1 {
                    let dy = y as f64 - p.y;
                    for x in x0..=x1 {
                        let dx = x as f64 - p.x;
                        let v = libm::exp(-(dx * dx + dy * dy) * inv);
                        total += v;
                        kernel.push(v);
                    }
                }
                let kw = x1 - x0 + 1;
                for (k, v) in kernel.iter().enumerate() {
                    let (y, x) = (y0 + k / kw, x0 + k % kw);
                    map.values[y * width + x] += v / total;
                }
            }
        }
        DensityMode::Predicted => {
            return Err(Error::invalid("targets are built in impulse or gaussian mode"));
        }
    }
    Ok(map)
}

fn nearest_pixel(p: &Point, width: usize, height: usize) -> (usize, usize) {
    let x = (libm::round(p.x) as usize).min(width - 1);
    let y = (libm::round(p.y) as usize).min(height - 1);
    (x, y)
}

/// Bilinear resize followed by a global rescale so the output sum equals
/// the input sum. A zero-sum map resizes to zeros without dividing.
pub fn mass_preserving_resize(map: &DensityMap, new_shape: (usize, usize)) -> Result<DensityMap> {
    if new_shape == map.shape() {
        return Ok(map.clone());
    }
    let resampler = Resampler::new(map.shape(), new_shape)?;
    let mut values = vec![0.0; new_shape.0 * new_shape.1];
    let mass_in = map.count();
    if mass_in != 0.0 {
        resampler.apply_plane(&map.values, &mut values);
        let mass_out: f64 = values.iter().sum();
        if mass_out != 0.0 {
            let k = mass_in / mass_out;
            for v in &mut values {
                *v *= k;
            }
        }
    }
    DensityMap::from_vec(new_shape.0, new_shape.1, values, map.mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_points(rng: &mut Rng, n: usize, w: usize, h: usize) -> Vec<Point> {
        (0..n)
            .map(|_| Point::new(rng.range(0.0, w as f64), rng.range(0.0, h as f64)))
            .map(|p| Point::new(p.x.min(w as f64 - 1e-9), p.y.min(h as f64 - 1e-9)))
            .collect()
    }

    #[test]
    fn empty_point_set_is_all_zero() {
        let m = build_density_target(&[], (32, 32), DensityMode::Impulse).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
        assert_eq!(m.count(), 0.0);
    }

    #[test]
    fn impulse_sum_is_exact() {
        let mut rng = Rng::new(149);
        let pts = random_points(&mut rng, 149, 97, 61);
        let m = build_density_target(&pts, (61, 97), DensityMode::Impulse).unwrap();
        assert_eq!(m.count(), 149.0);
    }

    #[test]
    fn impulse_rounds_to_nearest_and_clamps() {
        let pts = [Point::new(1.4, 0.6), Point::new(3.9, 2.7)];
        let m = build_density_target(&pts, (3, 4), DensityMode::Impulse).unwrap();
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(2, 3), 1.0);
    }

    #[test]
    fn gaussian_kernels_have_unit_mass() {
        // independent check: re-evaluate every kernel by brute force over
        // the whole frame and integrate with compensated summation
        let mut rng = Rng::new(10);
        let sigma = 1.5;
        let pts: Vec<Point> = (0..10)
            .map(|_| Point::new(rng.range(5.0, 43.0), rng.range(5.0, 27.0)))
            .collect();
        let m = build_density_target(&pts, (32, 48), DensityMode::Gaussian { sigma }).unwrap();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in m.values() {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        assert!((sum - 10.0).abs() <= 1e-6, "{sum}");

        // peak of a single kernel sits at the point's pixel and matches the
        // analytic truncated-and-normalized value
        let p = Point::new(20.0, 10.0);
        let one = build_density_target(&[p], (32, 48), DensityMode::Gaussian { sigma }).unwrap();
        let r = 5i32; // ceil(3 * 1.5)
        let mut z = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                z += libm::exp(-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma));
            }
        }
        assert!((one.get(10, 20) - 1.0 / z).abs() < 1e-15);
    }

    #[test]
    fn gaussian_near_border_still_unit_mass() {
        let pts = [Point::new(0.0, 0.0), Point::new(9.99, 4.5)];
        let m = build_density_target(&pts, (5, 10), DensityMode::Gaussian { sigma: 2.0 }).unwrap();
        assert!((m.count() - 2.0).abs() < 1e-12);
        assert!(m.is_nonnegative());
    }

    #[test]
    fn target_errors() {
        let out = [Point::new(10.0, 0.0)];
        assert!(matches!(
            build_density_target(&out, (4, 10), DensityMode::Impulse),
            Err(Error::PointOutOfBounds { .. })
        ));
        assert!(build_density_target(&[], (4, 4), DensityMode::Gaussian { sigma: 0.0 }).is_err());
        assert!(build_density_target(&[], (4, 4), DensityMode::Gaussian { sigma: -1.0 }).is_err());
    }

    #[test]
    fn resize_to_same_shape_is_identity() {
        let mut rng = Rng::new(3);
        let v: Vec<f64> = (0..30).map(|_| rng.uniform()).collect();
        let m = DensityMap::from_vec(5, 6, v, DensityMode::Predicted).unwrap();
        assert_eq!(mass_preserving_resize(&m, (5, 6)).unwrap(), m);
    }

    #[test]
    fn uniform_upsample_keeps_sum() {
        let m = DensityMap::from_vec(4, 4, vec![1.0; 16], DensityMode::Predicted).unwrap();
        let r = mass_preserving_resize(&m, (8, 8)).unwrap();
        assert!((r.count() - 16.0).abs() < 1e-12);
        assert_eq!(r.shape(), (8, 8));
    }

    #[test]
    fn random_downsample_keeps_sum() {
        let mut rng = Rng::new(256);
        let v: Vec<f64> = (0..256 * 256).map(|_| rng.uniform()).collect();
        let m = DensityMap::from_vec(256, 256, v, DensityMode::Predicted).unwrap();
        let r = mass_preserving_resize(&m, (224, 224)).unwrap();
        let (a, b) = (m.count(), r.count());
        assert!((a - b).abs() / a <= 1e-9);
    }

    #[test]
    fn zero_map_resizes_to_zero() {
        let m = DensityMap::zeros(9, 9, DensityMode::Predicted);
        let r = mass_preserving_resize(&m, (4, 13)).unwrap();
        assert_eq!(r.count(), 0.0);
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_impulse_survives_heavy_downsampling() {
        let pts = [Point::new(37.0, 51.0)];
        let m = build_density_target(&pts, (64, 64), DensityMode::Impulse).unwrap();
        let r = mass_preserving_resize(&m, (5, 5)).unwrap();
        assert!((r.count() - 1.0).abs() < 1e-12);
    }
}
