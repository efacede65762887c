//! Shared helpers for integration tests: random rotations, toy instances.

use anglegraph_core::encoding::{Encoder, EncoderKind};
use anglegraph_core::gnn::gradcheck::ToyInstance;
use anglegraph_core::gnn::{targets::FrameTargets, GnnParams};
use anglegraph_core::graph::build_radius_graph;
use anglegraph_core::io::RunConfig;
use anglegraph_core::types::{Point, PointCloud};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform random rotation matrix (proper, det +1) via quaternions.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let u1: f64 = rng.gen_range(0.0..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let u3: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = [a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()];
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate(m: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}

pub fn rotation_z(theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Tiny-width config for toy instances (total parameters well under 500).
pub fn toy_config(kind: EncoderKind, iterations: usize) -> RunConfig {
    RunConfig {
        encoder: kind,
        embedding_mlp: vec![3, 4],
        trunk_mlp: vec![4, 4],
        offset_mlp_hidden: vec![2],
        edge_mlp: vec![4, 4],
        update_mlp_hidden: vec![4],
        class_head_hidden: vec![3],
        loc_head: vec![3, 7],
        iterations,
        category_set: anglegraph_core::CategorySet::Car,
        ..RunConfig::default()
    }
}

/// A random well-separated toy instance: up to 3 vertices, T = 2, random
/// class labels and box targets. Geometry avoids near-parallel origin rays so
/// finite differences stay clean for the angle encoders.
pub fn toy_instance(kind: EncoderKind, rng: &mut ChaCha8Rng, n_vertices: usize) -> (RunConfig, GnnParams, ToyInstance) {
    let cfg = toy_config(kind, 2);
    let mut params = GnnParams::init(&RunConfig { seed: rng.gen(), ..cfg.clone() });
    // put every parameter (biases included) in general position so no ReLU
    // kink or max tie sits exactly at the finite-difference evaluation point
    params.for_each_param_mut(&mut |v| *v += rng.gen_range(-0.3..0.3));
    let vertices: Vec<Point> = (0..n_vertices)
        .map(|_| {
            Point::new(
                rng.gen_range(3.0..8.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.1..0.9),
            )
        })
        .collect();
    // raw cloud: the vertices plus a few satellites around each
    let mut raw = vertices.clone();
    for v in &vertices {
        for _ in 0..2 {
            raw.push(Point::new(
                v.x + rng.gen_range(-0.4..0.4),
                v.y + rng.gen_range(-0.4..0.4),
                v.z + rng.gen_range(-0.2..0.2),
                rng.gen_range(0.1..0.9),
            ));
        }
    }
    let cloud = PointCloud::new(raw, "toy");
    let graph = build_radius_graph(&vertices, 8.0, 16).unwrap();
    let m = cfg.num_classes();
    let targets = FrameTargets {
        class: (0..n_vertices).map(|_| rng.gen_range(0..m)).collect(),
        loc: (0..n_vertices)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    Some(std::array::from_fn(|_| rng.gen_range(-0.5..0.5)))
                } else {
                    None
                }
            })
            .collect(),
        excluded: (0..n_vertices).map(|_| rng.gen_bool(0.1)).collect(),
    };
    let inst = ToyInstance {
        graph,
        cloud,
        encoder: Encoder::new(kind, true),
        pool_radius: 0.9,
        targets,
    };
    (cfg, params, inst)
}
