//! Frame-level orchestration: raw cloud to merged detections.

use crate::detection::{decode_vertex_predictions, merge_boxes, MergeConfig};
use crate::error::Result;
use crate::gnn::{forward, GnnParams};
use crate::graph::{build_radius_graph, build_radius_graph_parallel};
use crate::io::RunConfig;
use crate::sampling::voxel_downsample;
use crate::types::{Box7DoF, PointCloud};

/// Detect objects in one frame: voxel downsample, radius graph, GNN forward,
/// per-vertex decode, merge.
pub fn detect_frame(
    cloud: &PointCloud,
    params: &GnnParams,
    cfg: &RunConfig,
    parallel_graph: bool,
) -> Result<Vec<Box7DoF>> {
    let down = voxel_downsample(cloud, cfg.voxel_size)?;
    let build = if parallel_graph { build_radius_graph_parallel } else { build_radius_graph };
    let graph = build(
        &down.vertices,
        cfg.resolved_radius(),
        cfg.max_edges_per_vertex,
    )?;
    let out = forward(&graph, cloud, cfg.encoder_config(), cfg.pool_radius, params)?;
    let candidates = decode_vertex_predictions(
        &graph.vertices,
        &out.class_logits,
        &out.loc,
        cfg.category_set,
    );
    let merge_cfg = MergeConfig {
        iou_threshold: cfg.merge_iou_threshold,
        score_floor: cfg.score_floor,
    };
    Ok(merge_boxes(&candidates, &merge_cfg))
}
