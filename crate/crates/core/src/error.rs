use std::path::PathBuf;
use thiserror::Error;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Bad parameter values or flags (exit 1).
    Usage,
    /// Unreadable, malformed or missing input data (exit 2).
    Data,
    /// Numeric or internal failures (exit 3).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    FileUnwritable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: file length {len} is not a multiple of 16 bytes")]
    MalformedRecordLength { path: PathBuf, len: u64 },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: {msg}")]
    Range {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxelSize(f64),
    #[error("graph radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("edge cap must be at least 1")]
    InvalidCap,
    #[error("unknown encoder {0:?} (expected euclidean, absolute, relative, angle or angle_relative)")]
    UnknownEncoder(String),
    #[error("position norm below 1e-6 m; direction undefined")]
    DegenerateVector,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iteration index {t} out of range (T = {max})")]
    IterationOutOfRange { t: usize, max: usize },
    #[error("dataset contains no usable frames")]
    EmptyDataset,
    #[error("frame {0} has no label file")]
    MissingLabels(String),
    #[error("detections must be sorted by descending score")]
    UnsortedDetections,
    #[error("benchmark needs at least one frame and 3 repetitions")]
    InsufficientFrames,
    #[error("class index {0} is not a foreground view category")]
    NonForegroundCategory(usize),
    #[error("vertex lies outside the ground-truth box")]
    VertexOutsideBox,
}

impl Error {
    pub fn exit_class(&self) -> ExitClass {
        use Error::*;
        match self {
            InvalidVoxelSize(_) | InvalidRadius(_) | InvalidCap | UnknownEncoder(_)
            | InsufficientFrames => ExitClass::Usage,
            FileUnreadable { .. }
            | FileUnwritable { .. }
            | MalformedRecordLength { .. }
            | Parse { .. }
            | Range { .. }
            | Config(_)
            | EmptyDataset
            | MissingLabels(_) => ExitClass::Data,
            DegenerateVector
            | DimensionMismatch(_)
            | IterationOutOfRange { .. }
            | UnsortedDetections
            | NonForegroundCategory(_)
            | VertexOutsideBox => ExitClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
