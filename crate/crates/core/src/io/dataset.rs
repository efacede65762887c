//! Dataset scanning and the `prepare` manifest: per-frame point and
//! ground-truth counts plus a deterministic train/val split.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::types::{Difficulty, LabelCategory};

use super::{read_labels, read_velodyne_bin, RunConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: String,
    pub n_points: usize,
    /// Ground-truth counts keyed "Category/Difficulty"; DontCare boxes are
    /// keyed "DontCare".
    pub gt_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub frames: Vec<FrameEntry>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    /// Frames excluded from the split, with reasons (e.g. missing labels).
    pub errors: Vec<(String, String)>,
}

fn count_key(cat: LabelCategory, diff: Option<Difficulty>) -> String {
    match (cat, diff) {
        (LabelCategory::DontCare, _) => "DontCare".to_string(),
        (c, Some(d)) => format!("{:?}/{}", c, d.name()),
        (c, None) => format!("{c:?}/unknown"),
    }
}

/// Scan `data_dir` for `<frame>.bin` / `<frame>.jsonl` pairs and build the
/// manifest. The split is a seeded shuffle of the valid frame ids, so re-runs
/// are identical.
pub fn build_manifest(data_dir: &Path, cfg: &RunConfig) -> Result<DatasetManifest> {
    let entries = fs::read_dir(data_dir).map_err(|source| Error::FileUnreadable {
        path: data_dir.to_path_buf(),
        source,
    })?;
    let mut bins: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("bin"))
        .collect();
    bins.sort();

    let mut frames = Vec::new();
    let mut errors = Vec::new();
    for bin in &bins {
        let frame_id = bin
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let label_path = bin.with_extension("jsonl");
        if !label_path.exists() {
            errors.push((frame_id, Error::MissingLabels(String::new()).to_string()));
            continue;
        }
        let cloud = match read_velodyne_bin(bin) {
            Ok(c) => c,
            Err(e) => {
                errors.push((frame_id, e.to_string()));
                continue;
            }
        };
        let labels = match read_labels(&label_path) {
            Ok(l) => l,
            Err(e) => {
                errors.push((frame_id, e.to_string()));
                continue;
            }
        };
        let mut gt_counts = BTreeMap::new();
        for b in &labels {
            *gt_counts.entry(count_key(b.category, b.difficulty)).or_insert(0) += 1;
        }
        frames.push(FrameEntry { frame_id, n_points: cloud.points.len(), gt_counts });
    }

    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut ids: Vec<String> = frames.iter().map(|f| f.frame_id.clone()).collect();
    let mut rng = derive_rng(cfg.seed, "prepare/split");
    ids.shuffle(&mut rng);
    let n_train = ((ids.len() as f64) * cfg.train_split).round() as usize;
    let n_train = n_train.clamp(1, ids.len().max(1));
    let (train, val) = ids.split_at(n_train.min(ids.len()));

    Ok(DatasetManifest {
        frames,
        train: train.to_vec(),
        val: val.to_vec(),
        errors,
    })
}
