use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the mesh → spheres → classifier pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("resolution {resolution} too large (cap {cap})")]
    ResolutionTooLarge { resolution: usize, cap: usize },
    #[error("invalid resolution {0} (must be at least 8)")]
    ResolutionTooSmall(usize),
    #[error("voxel grid has no occupied voxels")]
    EmptyGrid,
    #[error("no candidate voxels on the {0} side")]
    NoCandidates(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("config mismatch: cache built with {found}, current config is {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("corrupt cache file {path}: {msg}")]
    CacheCorrupt { path: PathBuf, msg: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergedTraining { epoch: usize, loss: f64 },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::CacheCorrupt {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
