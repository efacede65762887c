//! JSON-lines ground-truth labels and detection outputs.
//!
//! One object per line. serde_json prints f64 with shortest round-trip
//! notation, so write-then-read reproduces finite values bit-for-bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Box7DoF, GroundTruthBox, LabelCategory};

use super::write_atomic;

fn validate_box(b: &GroundTruthBox, path: &Path, line: usize) -> Result<()> {
    for (name, v) in [("l", b.l), ("w", b.w), ("h", b.h)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Range {
                path: path.to_path_buf(),
                line,
                msg: format!("dimension {name} must be positive, got {v}"),
            });
        }
    }
    if !b.yaw.is_finite() || b.yaw <= -std::f64::consts::PI || b.yaw > std::f64::consts::PI {
        return Err(Error::Range {
            path: path.to_path_buf(),
            line,
            msg: format!("yaw must lie in (-pi, pi], got {}", b.yaw),
        });
    }
    if b.category != LabelCategory::DontCare && b.difficulty.is_none() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: "difficulty is required for non-DontCare boxes".to_string(),
        });
    }
    Ok(())
}

/// Read ground-truth boxes in file order. DontCare boxes are retained (their
/// category marks them).
pub fn read_labels(path: &Path) -> Result<Vec<GroundTruthBox>> {
    let text = fs::read_to_string(path).map_err(|source| Error::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let b: GroundTruthBox = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        validate_box(&b, path, idx + 1)?;
        boxes.push(b);
    }
    Ok(boxes)
}

/// Write detections as JSON lines in input order, atomically. Field order is
/// fixed (category, cx, cy, cz, l, w, h, yaw, score).
pub fn write_detections(path: &Path, detections: &[Box7DoF]) -> Result<()> {
    let mut out = String::new();
    for d in detections {
        // Box7DoF is a plain struct; serialization cannot fail
        out.push_str(&serde_json::to_string(d).expect("detection serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_detections(path: &Path) -> Result<Vec<Box7DoF>> {
    let text = fs::read_to_string(path).map_err(|source| Error::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let mut dets = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Box7DoF = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        dets.push(d);
    }
    Ok(dets)
}
