//! Velodyne .bin ingestion: headerless little-endian binary32 quadruples
//! (x, y, z, reflectance), 16 bytes per point.

use std::fs;
use std::path::Path;

use crate::encoding::MIN_POSITION_NORM;
use crate::error::{Error, Result};
use crate::types::{Point, PointCloud};

/// Decode a Velodyne binary into a point cloud. Near-origin returns
/// (||p|| < 1e-6 m) and records with any non-finite field are dropped;
/// reflectance is clamped to [0, 1]; order is otherwise preserved.
pub fn read_velodyne_bin(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|source| Error::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() % 16 != 0 {
        return Err(Error::MalformedRecordLength {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
        });
    }
    let frame_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("")
        .to_string();
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for rec in bytes.chunks_exact(16) {
        let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]) as f64;
        let (x, y, z, refl) = (f(0), f(4), f(8), f(12));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && refl.is_finite()) {
            continue;
        }
        if (x * x + y * y + z * z).sqrt() < MIN_POSITION_NORM {
            continue;
        }
        points.push(Point::new(x, y, z, refl.clamp(0.0, 1.0)));
    }
    Ok(PointCloud::new(points, frame_id))
}

/// Encode points as Velodyne .bin bytes (synthetic-data and test helper;
/// the inverse of [`read_velodyne_bin`] for clean records).
pub fn velodyne_bytes(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * 16);
    for p in points {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        out.extend_from_slice(&(p.reflectance as f32).to_le_bytes());
    }
    out
}
