//! File ingestion and serialization: Velodyne binaries, JSON-lines labels and
//! detections, run configuration, dataset manifests.

mod config;
mod dataset;
mod labels;
pub(crate) mod velodyne;

pub use config::RunConfig;
pub use dataset::{build_manifest, DatasetManifest, FrameEntry};
pub use labels::{read_detections, read_labels, write_detections};
pub use velodyne::{read_velodyne_bin, velodyne_bytes};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Write a file atomically (write to a temp sibling, then rename), so readers
/// never observe partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)
    };
    write().map_err(|source| {
        let _ = fs::remove_file(&tmp);
        Error::FileUnwritable { path: path.to_path_buf(), source }
    })
}
