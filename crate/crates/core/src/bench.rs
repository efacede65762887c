//! Per-stage wall-clock benchmark: graph generation (downsample + graph
//! build + feature encoding) versus inference versus total, per encoder.
//!
//! Times come from a monotonic clock; one warm-up repetition is discarded and
//! medians over the rest are reported. Absolute agreement with published
//! timings is explicitly not a goal (different hardware); the table shape and
//! qualitative ordering are what is checked.

use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use crate::detection::{decode_vertex_predictions, merge_boxes, MergeConfig};
use crate::encoding::{Encoder, EncoderKind};
use crate::error::{Error, Result};
use crate::gnn::{forward, GnnParams};
use crate::graph::{build_radius_graph, build_radius_graph_parallel, Graph};
use crate::io::{read_velodyne_bin, RunConfig};
use crate::types::PointCloud;

/// One frame to benchmark. When `path` is set the file is re-read every
/// repetition and the read counts toward the total.
#[derive(Debug, Clone)]
pub struct BenchInput {
    pub cloud: PointCloud,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub encoder: EncoderKind,
    pub gen_graph_s: f64,
    pub inference_s: f64,
    pub total_s: f64,
    pub n_points: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub repetitions: usize,
    pub threads: usize,
}

/// Published timing context (the authors' Colab Tesla K80 setup), attached to
/// reports for qualitative comparison only.
pub const REFERENCE_TOTALS: [(EncoderKind, f64, f64, f64); 5] = [
    (EncoderKind::Euclidean, 0.088, 0.567, 0.750),
    (EncoderKind::Absolute, 0.089, 0.564, 0.778),
    (EncoderKind::Relative, 0.087, 0.567, 0.686),
    (EncoderKind::Angle, 0.088, 0.567, 0.728),
    (EncoderKind::AngleRelative, 0.088, 0.566, 0.748),
];

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Encode every edge of the graph once (the encoder-dependent slice of graph
/// generation) and return the elapsed seconds.
pub fn encoding_time_for_graph(graph: &Graph, encoder: Encoder) -> Result<f64> {
    let start = Instant::now();
    let mut geo = [0.0; 6];
    for &(i, j) in &graph.edges {
        let pi = graph.vertices[i as usize].pos();
        let pj = &graph.vertices[j as usize];
        let len = encoder.geo_into(pi, pj.pos(), &mut geo)?;
        black_box(&geo[..len]);
    }
    Ok(start.elapsed().as_secs_f64())
}

struct StageTimes {
    io: f64,
    gen: f64,
    inference: f64,
    merge: f64,
    n_points: usize,
    n_vertices: usize,
    n_edges: usize,
}

fn run_frame(
    input: &BenchInput,
    cfg: &RunConfig,
    params: &GnnParams,
    encoder: Encoder,
    parallel: bool,
) -> Result<StageTimes> {
    // I/O
    let t0 = Instant::now();
    let cloud = match &input.path {
        Some(p) => read_velodyne_bin(p)?,
        None => input.cloud.clone(),
    };
    let io = t0.elapsed().as_secs_f64();

    // graph generation: downsample, radius graph, feature encoding
    let t1 = Instant::now();
    let down = crate::sampling::voxel_downsample(&cloud, cfg.voxel_size)?;
    let build = if parallel { build_radius_graph_parallel } else { build_radius_graph };
    let graph = build(&down.vertices, cfg.resolved_radius(), cfg.max_edges_per_vertex)?;
    let mut geo = [0.0; 6];
    for &(i, j) in &graph.edges {
        let pi = graph.vertices[i as usize].pos();
        let pj = &graph.vertices[j as usize];
        let len = encoder.geo_into(pi, pj.pos(), &mut geo)?;
        black_box(&geo[..len]);
    }
    let gen = t1.elapsed().as_secs_f64();

    // inference: forward pass + per-vertex decoding
    let t2 = Instant::now();
    let out = forward(&graph, &cloud, encoder, cfg.pool_radius, params)?;
    let candidates =
        decode_vertex_predictions(&graph.vertices, &out.class_logits, &out.loc, cfg.category_set);
    let inference = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    let merged = merge_boxes(
        &candidates,
        &MergeConfig { iou_threshold: cfg.merge_iou_threshold, score_floor: cfg.score_floor },
    );
    black_box(&merged);
    let merge = t3.elapsed().as_secs_f64();

    Ok(StageTimes {
        io,
        gen,
        inference,
        merge,
        n_points: cloud.points.len(),
        n_vertices: graph.vertices.len(),
        n_edges: graph.edges.len(),
    })
}

/// Benchmark all five encoders in fixed order. Per repetition every stage is
/// summed over the frames; one warm-up repetition runs first and is
/// discarded; per-stage medians over the remaining repetitions are reported.
/// Total includes I/O and merging.
pub fn run_bench(
    frames: &[BenchInput],
    cfg: &RunConfig,
    repetitions: usize,
    threads: usize,
) -> Result<Vec<TimingRow>> {
    if frames.is_empty() || repetitions < 3 {
        return Err(Error::InsufficientFrames);
    }
    let parallel = threads > 1;
    let mut rows = Vec::with_capacity(EncoderKind::ALL.len());
    for kind in EncoderKind::ALL {
        let enc_cfg = RunConfig { encoder: kind, ..cfg.clone() };
        let params = GnnParams::init(&enc_cfg);
        let encoder = enc_cfg.encoder_config();

        let mut gen_samples = Vec::with_capacity(repetitions);
        let mut inf_samples = Vec::with_capacity(repetitions);
        let mut total_samples = Vec::with_capacity(repetitions);
        let mut counts = (0usize, 0usize, 0usize);
        for rep in 0..=repetitions {
            let mut gen = 0.0;
            let mut inf = 0.0;
            let mut total = 0.0;
            counts = (0, 0, 0);
            for frame in frames {
                let st = run_frame(frame, &enc_cfg, &params, encoder, parallel)?;
                gen += st.gen;
                inf += st.inference;
                total += st.io + st.gen + st.inference + st.merge;
                counts.0 += st.n_points;
                counts.1 += st.n_vertices;
                counts.2 += st.n_edges;
            }
            if rep == 0 {
                continue; // warm-up
            }
            gen_samples.push(gen);
            inf_samples.push(inf);
            total_samples.push(total);
        }
        rows.push(TimingRow {
            encoder: kind,
            gen_graph_s: median(&mut gen_samples),
            inference_s: median(&mut inf_samples),
            total_s: median(&mut total_samples),
            n_points: counts.0,
            n_vertices: counts.1,
            n_edges: counts.2,
            repetitions,
            threads,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from(
        "encoder,gen_graph_s,inference_s,total_s,n_points,n_vertices,n_edges,repetitions,threads\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{},{},{},{},{}\n",
            r.encoder.name(),
            r.gen_graph_s,
            r.inference_s,
            r.total_s,
            r.n_points,
            r.n_vertices,
            r.n_edges,
            r.repetitions,
            r.threads
        ));
    }
    out
}

/// Markdown table mirroring the published layout, with the reference totals
/// attached as a clearly labeled comparison column.
pub fn bench_markdown(rows: &[TimingRow]) -> String {
    let mut out = String::from(
        "| Feature Encoding | Gen. Graph (s) | Inference (s) | Total Time (s) | Reference Total (s, authors' Tesla K80) |\n\
         | --- | --- | --- | --- | --- |\n",
    );
    for r in rows {
        let reference = REFERENCE_TOTALS
            .iter()
            .find(|(k, _, _, _)| *k == r.encoder)
            .map(|&(_, _, _, t)| format!("{t:.3}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {} |\n",
            r.encoder.name(),
            r.gen_graph_s,
            r.inference_s,
            r.total_s,
            reference
        ));
    }
    out
}
