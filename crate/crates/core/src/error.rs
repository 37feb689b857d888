use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("point ({x}, {y}) lies outside the {width}x{height} frame")]
    PointOutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "input of {height}x{width} is not divisible by patch size {patch}; \
         resize or crop the image to a multiple of the patch size first"
    )]
    IndivisibleInput {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("crop of side {size} at ({x}, {y}) does not fit a {width}x{height} image")]
    CropOutOfBounds {
        x: usize,
        y: usize,
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("could only place {achieved} of {requested} instances")]
    InfeasiblePacking { requested: usize, achieved: usize },

    #[error("non-finite loss in batch [{}]", ids.join(", "))]
    NonFiniteLoss { ids: Vec<String> },

    #[error("non-finite density in tile at origin ({x}, {y})")]
    NonFiniteTile { x: usize, y: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn shape(left: impl core::fmt::Debug, right: impl core::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            left: alloc::format!("{left:?}"),
            right: alloc::format!("{right:?}"),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
