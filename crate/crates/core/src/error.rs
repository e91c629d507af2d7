use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("raster size mismatch: expected {expected:?}, found {found:?}")]
    SizeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("label {label} is not in the configured label table")]
    UnknownLabel { label: u8 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("visibility mask is empty")]
    EmptyVisibility,

    #[error(
        "frame {frame} needs {window} future frames but the sequence has {len} frames (last processable index: {})",
        last_processable.map_or_else(|| "none".to_string(), |i| i.to_string())
    )]
    WindowUnderflow {
        frame: usize,
        window: usize,
        len: usize,
        last_processable: Option<usize>,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{what} count mismatch: expected {expected}, found {found}")]
    CountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("{}:{line}: malformed line: {reason}", path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("frame {frame} ({}): raster is {found:?}, expected {expected:?}", path.display())]
    RasterMismatch {
        path: PathBuf,
        frame: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{}{}: {reason}", path.display(), line.map_or_else(String::new, |l| format!(":{l}")))]
    InvariantViolation {
        path: PathBuf,
        line: Option<usize>,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// Process exit code for the command-line tool, one per error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::SizeMismatch { .. } => 3,
            Error::UnknownLabel { .. } => 4,
            Error::DegenerateFit(_) => 5,
            Error::EmptyVisibility => 6,
            Error::WindowUnderflow { .. } => 7,
            Error::MissingFile(_) => 10,
            Error::CountMismatch { .. } => 11,
            Error::MalformedLine { .. } => 12,
            Error::RasterMismatch { .. } => 13,
            Error::InvariantViolation { .. } => 14,
            Error::Io { .. } => 20,
            Error::Image { .. } => 21,
        }
    }

    /// Wraps an I/O failure on `path`; a missing file maps to [`Error::MissingFile`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        let path = path.into();
        match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image { path, source },
        }
    }
}
