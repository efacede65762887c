//! Run configuration: a single JSON document with every knob defaulted.
//! Unknown keys are rejected with an error naming the key.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{Encoder, EncoderKind};
use crate::error::{Error, Result};
use crate::types::CategorySet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub encoder: EncoderKind,
    /// Radius of the vertex graph; `None` picks the per-category-set default
    /// (4.0 m for car runs, 1.6 m for ped/cyc runs).
    pub radius: Option<f64>,
    pub voxel_size: f64,
    /// Gather radius for pointset pooling of raw points around each vertex.
    pub pool_radius: f64,
    pub max_edges_per_vertex: usize,
    /// Number of message-passing iterations T.
    pub iterations: usize,
    pub category_set: CategorySet,
    pub seed: u64,
    /// Divide angle channels by 180 before they reach the network.
    pub angle_normalization: bool,

    // optimizer: SGD with staircase decay, batch size 1 (one frame per step)
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_steps: usize,
    pub epochs: usize,
    pub train_split: f64,

    // network widths; the last embedding width is the vertex state width
    pub embedding_mlp: Vec<usize>,
    pub trunk_mlp: Vec<usize>,
    /// Offset MLP hidden widths; the 3-wide output layer is appended.
    pub offset_mlp_hidden: Vec<usize>,
    /// Per-edge MLP widths; its last width is the aggregated message width.
    pub edge_mlp: Vec<usize>,
    /// State-update MLP hidden widths; the state-wide output is appended.
    pub update_mlp_hidden: Vec<usize>,
    /// Class head hidden widths; the M-wide output layer is appended.
    pub class_head_hidden: Vec<usize>,
    pub loc_head: Vec<usize>,

    // box merging
    pub merge_iou_threshold: f64,
    pub score_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            encoder: EncoderKind::AngleRelative,
            radius: None,
            voxel_size: 0.8,
            pool_radius: 0.8,
            max_edges_per_vertex: 256,
            iterations: 3,
            category_set: CategorySet::Car,
            seed: 0,
            angle_normalization: true,
            lr0: 0.1,
            decay_factor: 0.5,
            decay_steps: 600,
            epochs: 200,
            train_split: 0.8,
            embedding_mlp: vec![32, 64, 128, 300],
            trunk_mlp: vec![64, 128, 64],
            offset_mlp_hidden: vec![64],
            edge_mlp: vec![64, 64],
            update_mlp_hidden: vec![128],
            class_head_hidden: vec![64],
            loc_head: vec![64, 64, 7],
            merge_iou_threshold: 0.5,
            score_floor: 0.3,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|source| Error::FileUnreadable {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Graph radius after applying the per-category-set default.
    pub fn resolved_radius(&self) -> f64 {
        self.radius.unwrap_or(match self.category_set {
            CategorySet::Car => 4.0,
            CategorySet::PedCyc => 1.6,
        })
    }

    pub fn encoder_config(&self) -> Encoder {
        Encoder::new(self.encoder, self.angle_normalization)
    }

    /// Vertex state width (the last embedding layer).
    pub fn state_width(&self) -> usize {
        *self.embedding_mlp.last().expect("validated non-empty")
    }

    pub fn num_classes(&self) -> usize {
        self.category_set.num_classes()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolved_radius();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidRadius(r));
        }
        if !(self.voxel_size > 0.0) || !self.voxel_size.is_finite() {
            return Err(Error::InvalidVoxelSize(self.voxel_size));
        }
        if self.max_edges_per_vertex < 1 {
            return Err(Error::InvalidCap);
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.pool_radius > 0.0) || !self.pool_radius.is_finite() {
            return Err(Error::Config(format!(
                "pool_radius must be positive, got {}",
                self.pool_radius
            )));
        }
        if !(self.train_split > 0.0 && self.train_split < 1.0) {
            return Err(Error::Config(format!(
                "train_split must lie in (0, 1), got {}",
                self.train_split
            )));
        }
        for (name, v) in [
            ("merge_iou_threshold", self.merge_iou_threshold),
            ("score_floor", self.score_floor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, widths) in [
            ("embedding_mlp", &self.embedding_mlp),
            ("trunk_mlp", &self.trunk_mlp),
            ("edge_mlp", &self.edge_mlp),
            ("loc_head", &self.loc_head),
        ] {
            if widths.is_empty() || widths.iter().any(|&w| w == 0) {
                return Err(Error::Config(format!("{name} widths must be non-empty and >= 1")));
            }
        }
        if self.loc_head.last() != Some(&7) {
            return Err(Error::Config("loc_head must end in width 7".into()));
        }
        if self.offset_mlp_hidden.iter().any(|&w| w == 0)
            || self.update_mlp_hidden.iter().any(|&w| w == 0)
            || self.class_head_hidden.iter().any(|&w| w == 0)
        {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        if !(self.lr0 > 0.0) || !(self.decay_factor > 0.0) || self.decay_steps == 0 {
            return Err(Error::Config("lr schedule values must be positive".into()));
        }
        Ok(())
    }
}
