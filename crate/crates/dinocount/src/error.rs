use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("images missing for {} annotated id(s): {}", .0.len(), .0.join(", "))]
    MissingImages(Vec<String>),
    #[error("annotation for `{id}`: {source}")]
    Annotation {
        id: String,
        #[source]
        source: dinocount_core::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dinocount_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path)
            } else {
                Error::Io { path, source }
            }
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the failure stems from bad inputs or configuration rather than
    /// from something that went wrong while running.
    pub fn is_validation(&self) -> bool {
        use dinocount_core::Error as C;
        match self {
            Error::MissingFile(_)
            | Error::Json { .. }
            | Error::Format { .. }
            | Error::MissingImages(_)
            | Error::Annotation { .. }
            | Error::Config(_) => true,
            Error::Core(c) => matches!(
                c,
                C::InvalidParameter(_)
                    | C::PointOutOfBounds { .. }
                    | C::IndivisibleInput { .. }
                    | C::Unsupported(_)
                    | C::MissingParameter(_)
                    | C::InfeasiblePacking { .. }
            ),
            _ => false,
        }
    }
}
