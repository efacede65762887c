use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use anglegraph_bench::bench_cloud;
use anglegraph_core::encoding::{Encoder, EncoderKind};
use anglegraph_core::gnn::{forward, GnnParams};
use anglegraph_core::graph::{brute_force_neighbors, build_radius_graph};
use anglegraph_core::io::RunConfig;
use anglegraph_core::sampling::voxel_downsample;

fn graph_construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("radius_graph");
    for n in [500usize, 2_000, 8_000] {
        let cloud = bench_cloud(n, 7);
        group.bench_with_input(BenchmarkId::new("grid", n), &cloud, |b, cloud| {
            b.iter(|| build_radius_graph(black_box(&cloud.points), 1.6, 256).unwrap())
        });
        if n <= 2_000 {
            group.bench_with_input(BenchmarkId::new("brute_force", n), &cloud, |b, cloud| {
                b.iter(|| brute_force_neighbors(black_box(&cloud.points), 1.6, 256).unwrap())
            });
        }
    }
    group.finish();
}

fn encoders(c: &mut Criterion) {
    let cloud = bench_cloud(2_000, 9);
    let graph = build_radius_graph(&cloud.points, 1.6, 64).unwrap();
    let mut group = c.benchmark_group("encode_edges");
    for kind in EncoderKind::ALL {
        let enc = Encoder::new(kind, true);
        group.bench_function(kind.name(), |b| {
            b.iter(|| {
                let mut geo = [0.0f64; 6];
                for &(i, j) in &graph.edges {
                    let pi = graph.vertices[i as usize].pos();
                    let pj = graph.vertices[j as usize].pos();
                    enc.geo_into(black_box(pi), black_box(pj), &mut geo).unwrap();
                    black_box(&geo);
                }
            })
        });
    }
    group.finish();
}

fn gnn_forward(c: &mut Criterion) {
    let cfg = RunConfig {
        voxel_size: 0.4,
        radius: Some(1.6),
        pool_radius: 0.6,
        iterations: 2,
        embedding_mlp: vec![16, 32],
        trunk_mlp: vec![16],
        offset_mlp_hidden: vec![8],
        edge_mlp: vec![32],
        update_mlp_hidden: vec![16],
        class_head_hidden: vec![8],
        loc_head: vec![8, 7],
        ..RunConfig::default()
    };
    let params = GnnParams::init(&cfg);
    let cloud = bench_cloud(2_000, 11);
    let down = voxel_downsample(&cloud, cfg.voxel_size).unwrap();
    let graph = build_radius_graph(&down.vertices, cfg.resolved_radius(), 64).unwrap();
    c.bench_function("gnn_forward_2k", |b| {
        b.iter(|| {
            forward(
                black_box(&graph),
                black_box(&cloud),
                cfg.encoder_config(),
                cfg.pool_radius,
                &params,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, graph_construction, encoders, gnn_forward);
criterion_main!(benches);
