//! Voxel-grid downsampling of a raw cloud into graph vertices.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::{Point, PointCloud};

/// Downsampling output. Each vertex is the arithmetic centroid of its voxel's
/// points, carries the mean member reflectance, and `assignment[raw_idx]`
/// gives the vertex index of every raw point. Vertices are ordered by first
/// occurrence of their voxel in the input, which keeps the whole pipeline
/// deterministic in the input order.
#[derive(Debug, Clone)]
pub struct DownsampleResult {
    pub vertices: Vec<Point>,
    pub assignment: Vec<u32>,
}

#[inline]
fn voxel_key(p: &Point, inv_size: f64) -> (i64, i64, i64) {
    // floor, not truncation: negative coordinates must not share a
    // double-width cell at zero
    (
        (p.x * inv_size).floor() as i64,
        (p.y * inv_size).floor() as i64,
        (p.z * inv_size).floor() as i64,
    )
}

pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<DownsampleResult> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::InvalidVoxelSize(voxel_size));
    }
    let inv = 1.0 / voxel_size;

    struct Accum {
        sum: [f64; 3],
        refl_sum: f64,
        count: u32,
    }

    let mut index: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let mut voxels: Vec<Accum> = Vec::new();
    let mut assignment = Vec::with_capacity(cloud.points.len());

    for p in &cloud.points {
        let key = voxel_key(p, inv);
        let v = *index.entry(key).or_insert_with(|| {
            voxels.push(Accum { sum: [0.0; 3], refl_sum: 0.0, count: 0 });
            (voxels.len() - 1) as u32
        });
        let a = &mut voxels[v as usize];
        a.sum[0] += p.x;
        a.sum[1] += p.y;
        a.sum[2] += p.z;
        a.refl_sum += p.reflectance;
        a.count += 1;
        assignment.push(v);
    }

    let vertices = voxels
        .iter()
        .map(|a| {
            let n = a.count as f64;
            Point::new(a.sum[0] / n, a.sum[1] / n, a.sum[2] / n, a.refl_sum / n)
        })
        .collect();

    Ok(DownsampleResult { vertices, assignment })
}
