use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("index out of range: face {face} references vertex {index}, mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },

    #[error("face {0} repeats a vertex index")]
    RepeatedIndex(usize),

    #[error("empty mesh")]
    EmptyMesh,

    #[error("empty after clean")]
    EmptyAfterClean,

    #[error("zero-extent mesh: all vertices coincide")]
    ZeroExtent,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported polynomial degree {0} (expected 2 or 4)")]
    UnsupportedDegree(usize),

    #[error("unsupported basis size {0} (expected 3 or 6)")]
    UnsupportedBasisSize(usize),

    #[error("empty patch at vertex {0}")]
    EmptyPatch(usize),

    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("backward called without a recorded training forward pass")]
    NoTape,

    #[error("batch norm needs at least 2 samples in training mode, got {0}")]
    BatchTooSmall(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("image has {pixels} pixels, fewer than the {nodes} requested nodes")]
    ImageTooSmall { pixels: usize, nodes: usize },

    #[error("empty gallery")]
    EmptyGallery,

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("output exists: {}", .0.display())]
    OutputExists(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by the environment (files, permissions) rather
    /// than by inputs that violate an operation's contract.
    pub fn is_environmental(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::OutputExists(_))
    }
}
