//! Benchmark-only crate; see `benches/pipeline.rs`. Re-exports shared input
//! builders so benches stay small.

use anglegraph_core::rng::derive_rng;
use anglegraph_core::synthetic::uniform_cloud;
use anglegraph_core::types::PointCloud;

/// Deterministic uniform cloud for benchmarking, sized to roughly constant
/// density at any `n`.
pub fn bench_cloud(n: usize, seed: u64) -> PointCloud {
    let side = (n as f64 / 50.0).cbrt().max(1.0) * 4.0;
    uniform_cloud(n, side, &mut derive_rng(seed, "bench-cloud"), "bench")
}
