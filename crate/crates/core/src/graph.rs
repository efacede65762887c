//! Radius-graph construction over vertices, backed by a uniform spatial grid.
//!
//! An edge (i, j) means "j is a neighbor feeding messages into i" and exists
//! exactly when 0 < ||p_i - p_j|| < r (strict), except that a vertex keeps
//! only its `max_edges` nearest in-neighbors (ties broken by smaller j). The
//! canonical edge order is (i, then distance ascending, then j ascending);
//! message passing itself tolerates any edge permutation.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::Point;

#[derive(Debug, Clone)]
pub struct Graph {
    /// Vertex positions; `reflectance` carries the voxel-mean reflectance.
    pub vertices: Vec<Point>,
    /// Directed edges (center, neighbor), both directions materialized.
    pub edges: Vec<(u32, u32)>,
    pub radius: f64,
}

impl Graph {
    /// Assemble a graph from explicit parts (tests, permutation harnesses,
    /// deserialized dumps).
    pub fn from_parts(vertices: Vec<Point>, edges: Vec<(u32, u32)>, radius: f64) -> Graph {
        Graph { vertices, edges, radius }
    }

    pub fn in_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.vertices.len()];
        for &(i, _) in &self.edges {
            deg[i as usize] += 1;
        }
        deg
    }

    /// Debug dump for external visualization: {"vertices": [[x,y,z],..],
    /// "edges": [[i,j],..]}.
    pub fn to_debug_json(&self) -> String {
        let vertices: Vec<[f64; 3]> = self.vertices.iter().map(|p| p.pos()).collect();
        let edges: Vec<[u32; 2]> = self.edges.iter().map(|&(i, j)| [i, j]).collect();
        serde_json::json!({ "vertices": vertices, "edges": edges }).to_string()
    }
}

/// Uniform hash grid over points with a fixed cell size; queries inspect the
/// 27 cells around the query location. Shared by graph construction and
/// pointset pooling.
pub struct UniformGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl UniformGrid {
    pub fn build(points: &[Point], cell: f64) -> UniformGrid {
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (idx, p) in points.iter().enumerate() {
            cells.entry(Self::key(p.pos(), cell)).or_default().push(idx as u32);
        }
        UniformGrid { cell, cells }
    }

    #[inline]
    fn key(p: [f64; 3], cell: f64) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    /// Collect `(dist_sq, idx)` of all `points` with 0 <= dist < r of `q`,
    /// excluding `skip`. Requires r <= cell size. Output order is unspecified.
    pub fn within_radius(
        &self,
        points: &[Point],
        q: [f64; 3],
        r: f64,
        skip: Option<u32>,
        out: &mut Vec<(f64, u32)>,
    ) {
        debug_assert!(r <= self.cell * (1.0 + 1e-12));
        out.clear();
        let r_sq = r * r;
        let (kx, ky, kz) = Self::key(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(ids) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in ids {
                        if skip == Some(j) {
                            continue;
                        }
                        let p = &points[j as usize];
                        let ddx = p.x - q[0];
                        let ddy = p.y - q[1];
                        let ddz = p.z - q[2];
                        let d_sq = ddx * ddx + ddy * ddy + ddz * ddz;
                        if d_sq < r_sq {
                            out.push((d_sq, j));
                        }
                    }
                }
            }
        }
    }
}

fn check_params(r: f64, max_edges: usize) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidRadius(r));
    }
    if max_edges < 1 {
        return Err(Error::InvalidCap);
    }
    Ok(())
}

/// Sort candidate neighbors by (distance, index), apply the cap, drop
/// coincident vertices (distance exactly 0).
fn finish_neighbors(cands: &mut Vec<(f64, u32)>, max_edges: usize) {
    cands.retain(|&(d_sq, _)| d_sq > 0.0);
    cands.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cands.truncate(max_edges);
}

/// Grid-indexed radius graph. Complexity is near-linear in the vertex count
/// at fixed density.
pub fn build_radius_graph(vertices: &[Point], r: f64, max_edges: usize) -> Result<Graph> {
    check_params(r, max_edges)?;
    let grid = UniformGrid::build(vertices, r);
    let mut edges = Vec::new();
    let mut cands = Vec::new();
    for i in 0..vertices.len() {
        grid.within_radius(vertices, vertices[i].pos(), r, Some(i as u32), &mut cands);
        finish_neighbors(&mut cands, max_edges);
        edges.extend(cands.iter().map(|&(_, j)| (i as u32, j)));
    }
    Ok(Graph { vertices: vertices.to_vec(), edges, radius: r })
}

/// Parallel variant of [`build_radius_graph`]; the result is identical
/// (per-vertex neighbor lists are concatenated in vertex order).
pub fn build_radius_graph_parallel(vertices: &[Point], r: f64, max_edges: usize) -> Result<Graph> {
    check_params(r, max_edges)?;
    let grid = UniformGrid::build(vertices, r);
    let per_vertex: Vec<Vec<(f64, u32)>> = (0..vertices.len())
        .into_par_iter()
        .map(|i| {
            let mut cands = Vec::new();
            grid.within_radius(vertices, vertices[i].pos(), r, Some(i as u32), &mut cands);
            finish_neighbors(&mut cands, max_edges);
            cands
        })
        .collect();
    let mut edges = Vec::new();
    for (i, cands) in per_vertex.into_iter().enumerate() {
        edges.extend(cands.into_iter().map(|(_, j)| (i as u32, j)));
    }
    Ok(Graph { vertices: vertices.to_vec(), edges, radius: r })
}

/// Exact all-pairs construction with identical ordering/cap rules. Test and
/// benchmark oracle only; O(N^2).
pub fn brute_force_neighbors(vertices: &[Point], r: f64, max_edges: usize) -> Result<Graph> {
    check_params(r, max_edges)?;
    let r_sq = r * r;
    let mut edges = Vec::new();
    let mut cands = Vec::new();
    for i in 0..vertices.len() {
        cands.clear();
        for j in 0..vertices.len() {
            if i == j {
                continue;
            }
            let d_sq = vertices[i].dist_sq(&vertices[j]);
            if d_sq < r_sq {
                cands.push((d_sq, j as u32));
            }
        }
        finish_neighbors(&mut cands, max_edges);
        edges.extend(cands.iter().map(|&(_, j)| (i as u32, j)));
    }
    Ok(Graph { vertices: vertices.to_vec(), edges, radius: r })
}
