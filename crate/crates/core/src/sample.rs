use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor3};

/// Object-center annotation in pixel coordinates; `x` is horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(alloc::format!("unknown split `{other}`"))),
        }
    }
}

impl core::fmt::Display for Split {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An RGB image with its point annotations.
///
/// `pixels` is a 3-channel [`Tensor3`]. Raw samples hold values in `[0, 1]`;
/// after [`crate::augment::augment_sample`] with a non-identity normalization
/// they hold normalized values instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub pixels: Tensor3,
    pub points: Vec<Point>,
    pub split: Split,
}

impl ImageSample {
    pub fn new(id: impl Into<String>, pixels: Tensor3, points: Vec<Point>, split: Split) -> Result<Self> {
        let sample = Self {
            id: id.into(),
            pixels,
            points,
            split,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Checks the shape and annotation invariants (not the pixel range).
    pub fn validate(&self) -> Result<()> {
        if self.pixels.channels() != 3 {
            return Err(Error::shape("3 channels", self.pixels.channels()));
        }
        if self.width() == 0 || self.height() == 0 {
            return Err(Error::invalid(alloc::format!("sample `{}` has an empty image", self.id)));
        }
        if let Some(p) = self.points.iter().find(|p| !p.in_bounds(self.width(), self.height())) {
            return Err(Error::PointOutOfBounds {
                x: p.x,
                y: p.y,
                width: self.width(),
                height: self.height(),
            });
        }
        Ok(())
    }
}

/// Indexed access to a collection of samples, so training can stream images
/// from disk instead of holding a whole dataset in memory.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn id(&self, index: usize) -> String;

    fn get(&self, index: usize) -> Result<ImageSample>;
}

impl SampleSource for [ImageSample] {
    fn len(&self) -> usize {
        <[ImageSample]>::len(self)
    }

    fn id(&self, index: usize) -> String {
        self[index].id.clone()
    }

    fn get(&self, index: usize) -> Result<ImageSample> {
        Ok(self[index].clone())
    }
}

impl SampleSource for Vec<ImageSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn id(&self, index: usize) -> String {
        self[index].id.clone()
    }

    fn get(&self, index: usize) -> Result<ImageSample> {
        Ok(self[index].clone())
    }
}
