//! Detection network forward pass and hand-written backward pass.
//!
//! Pipeline per frame: pointset pooling builds the initial vertex states by
//! max-aggregating embedded (vertex, raw point) pair features; T residual
//! message-passing iterations refine them; a shared trunk feeds the class and
//! localization heads.
//!
//! Each iteration predicts a per-vertex alignment offset, subtracts it from
//! the vertex coordinate, and feeds the corrected center into the active
//! encoder for every in-edge, so for the relative encoder the geometric term
//! is the offset-corrected coordinate difference. Gradients therefore flow
//! through the encoder geometry into the offset MLP.
//!
//! Max aggregations route gradients to the winning element only (ties to the
//! lowest list index). The backward pass stores winner indices and recomputes
//! the winning edge/point MLP activations instead of keeping a full tape.
//!
//! Both passes parallelize over vertices (and edge blocks), but every
//! reduction runs in a fixed order — per-vertex work is pure and ordered by
//! index, edge messages fold in edge-list order, and gradient buffers reduce
//! in fixed chunk order — so results are bit-identical for any thread count.

use rayon::prelude::*;

use crate::encoding::Encoder;
use crate::error::{Error, Result};
use crate::graph::{Graph, UniformGrid};
use crate::types::PointCloud;

use super::mlp::{Mlp, MlpCache};
use super::params::GnnParams;

const NO_WINNER: u32 = u32::MAX;
/// Fixed parallel granularities; independent of the thread count so that
/// chunked gradient reductions are reproducible everywhere.
const VERTEX_CHUNK: usize = 16;
const EDGE_BLOCK: usize = 4096;

/// Per-vertex head outputs, row-major.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub class_logits: Vec<f64>,
    pub loc: Vec<f64>,
    pub num_classes: usize,
}

pub(crate) fn validate_dims(params: &GnnParams, encoder: Encoder) -> Result<()> {
    let state = params.state_width();
    if params.embedding.in_dim() != encoder.feature_len() {
        return Err(Error::DimensionMismatch(format!(
            "embedding expects input {}, encoder produces {}",
            params.embedding.in_dim(),
            encoder.feature_len()
        )));
    }
    let edge_in = encoder.geo_len() + 1 + state;
    for (t, it) in params.iterations.iter().enumerate() {
        if it.offset.in_dim() != state || it.offset.out_dim() != 3 {
            return Err(Error::DimensionMismatch(format!(
                "iteration {t}: offset MLP must map state -> 3"
            )));
        }
        if it.edge.in_dim() != edge_in {
            return Err(Error::DimensionMismatch(format!(
                "iteration {t}: edge MLP expects input {}, needs {edge_in}",
                it.edge.in_dim()
            )));
        }
        if it.update.in_dim() != it.edge.out_dim() || it.update.out_dim() != state {
            return Err(Error::DimensionMismatch(format!(
                "iteration {t}: update MLP must map edge output -> state"
            )));
        }
    }
    if params.trunk.in_dim() != state {
        return Err(Error::DimensionMismatch("trunk input must be the state width".into()));
    }
    if params.loc_head.out_dim() != 7 {
        return Err(Error::DimensionMismatch("loc head must emit 7 values".into()));
    }
    Ok(())
}

/// Raw points within the pool radius of each vertex, as indices into the
/// cloud, sorted ascending for deterministic tie-breaks.
fn gather_pool_neighbors(graph: &Graph, cloud: &PointCloud, pool_radius: f64) -> Vec<Vec<u32>> {
    let grid = UniformGrid::build(&cloud.points, pool_radius);
    graph
        .vertices
        .par_iter()
        .map(|v| {
            let mut buf = Vec::new();
            grid.within_radius(&cloud.points, v.pos(), pool_radius, None, &mut buf);
            let mut ids: Vec<u32> = buf.iter().map(|&(_, j)| j).collect();
            ids.sort_unstable();
            ids
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Gathered raw-point indices per vertex.
    pub gathered: Vec<Vec<u32>>,
    /// Winning gather-list position per (vertex, state dim); NO_WINNER when
    /// the gather was empty.
    winners: Vec<u32>,
}

/// One vertex's pooled state (and winner positions when requested).
fn pool_vertex(
    v: usize,
    ids: &[u32],
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    params: &GnnParams,
    want_winners: bool,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let state = params.state_width();
    let mut row = vec![0.0; state];
    let mut winners = if want_winners { vec![NO_WINNER; state] } else { Vec::new() };
    if ids.is_empty() {
        return Ok((row, winners));
    }
    row.fill(f64::NEG_INFINITY);
    let vpos = graph.vertices[v].pos();
    let mut feat = vec![0.0; encoder.feature_len()];
    for (pos, &q) in ids.iter().enumerate() {
        let raw = &cloud.points[q as usize];
        let enc = encoder.encode(vpos, raw.pos(), raw.reflectance)?;
        enc.write_to(&mut feat);
        let emb = params.embedding.forward(&feat);
        for (d, &val) in emb.iter().enumerate() {
            if val > row[d] {
                row[d] = val;
                if want_winners {
                    winners[d] = pos as u32;
                }
            }
        }
    }
    Ok((row, winners))
}

fn pool_impl(
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    pool_radius: f64,
    params: &GnnParams,
    want_winners: bool,
) -> Result<(Vec<f64>, PoolCache)> {
    validate_dims(params, encoder)?;
    let state = params.state_width();
    let gathered = gather_pool_neighbors(graph, cloud, pool_radius);
    let rows: Vec<(Vec<f64>, Vec<u32>)> = (0..graph.vertices.len())
        .into_par_iter()
        .map(|v| pool_vertex(v, &gathered[v], graph, cloud, encoder, params, want_winners))
        .collect::<Result<_>>()?;
    let mut states = vec![0.0; graph.vertices.len() * state];
    let mut winners = if want_winners {
        vec![NO_WINNER; graph.vertices.len() * state]
    } else {
        Vec::new()
    };
    for (v, (row, win)) in rows.into_iter().enumerate() {
        states[v * state..(v + 1) * state].copy_from_slice(&row);
        if want_winners {
            winners[v * state..(v + 1) * state].copy_from_slice(&win);
        }
    }
    Ok((states, PoolCache { gathered, winners }))
}

/// Initial vertex states: elementwise max over embedded pair features of the
/// gathered raw points; vertices with an empty gather keep the zero vector.
pub fn pointset_pool(
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    pool_radius: f64,
    params: &GnnParams,
) -> Result<Vec<f64>> {
    Ok(pool_impl(graph, cloud, encoder, pool_radius, params, false)?.0)
}

pub fn pointset_pool_cached(
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    pool_radius: f64,
    params: &GnnParams,
) -> Result<(Vec<f64>, PoolCache)> {
    let (states, cache) = pool_impl(graph, cloud, encoder, pool_radius, params, true)?;
    Ok((states, cache))
}

/// Cache of one message-passing iteration, enough to rebuild the winning edge
/// activations during backward.
#[derive(Debug, Clone)]
pub struct IterCache {
    offset_caches: Vec<MlpCache>,
    corrected: Vec<[f64; 3]>,
    update_caches: Vec<MlpCache>,
    /// Winning edge-list position per (vertex, message dim).
    winners: Vec<u32>,
    has_in: Vec<bool>,
}

/// One residual message-passing iteration (state t -> t+1).
pub fn gnn_iteration(
    graph: &Graph,
    states: &[f64],
    params: &GnnParams,
    t: usize,
    encoder: Encoder,
) -> Result<Vec<f64>> {
    iteration_impl(graph, states, params, t, encoder, false).map(|(s, _)| s)
}

pub fn gnn_iteration_cached(
    graph: &Graph,
    states: &[f64],
    params: &GnnParams,
    t: usize,
    encoder: Encoder,
) -> Result<(Vec<f64>, IterCache)> {
    let (s, c) = iteration_impl(graph, states, params, t, encoder, true)?;
    Ok((s, c.expect("cache requested")))
}

/// Edge message input: geometry of (corrected center, neighbor), neighbor
/// reflectance, neighbor state.
fn edge_input(
    buf: &mut [f64],
    encoder: Encoder,
    corrected: &[[f64; 3]],
    graph: &Graph,
    states: &[f64],
    state: usize,
    i: usize,
    j: usize,
) -> Result<()> {
    let geo_len = encoder.geo_len();
    let mut geo = [0.0; 6];
    let len = encoder.geo_into(corrected[i], graph.vertices[j].pos(), &mut geo)?;
    buf[..len].copy_from_slice(&geo[..len]);
    buf[geo_len] = graph.vertices[j].reflectance;
    buf[geo_len + 1..].copy_from_slice(&states[j * state..(j + 1) * state]);
    Ok(())
}

fn iteration_impl(
    graph: &Graph,
    states: &[f64],
    params: &GnnParams,
    t: usize,
    encoder: Encoder,
    want_cache: bool,
) -> Result<(Vec<f64>, Option<IterCache>)> {
    validate_dims(params, encoder)?;
    let it = params
        .iterations
        .get(t)
        .ok_or(Error::IterationOutOfRange { t, max: params.iterations.len() })?;
    let n = graph.vertices.len();
    let state = params.state_width();
    if states.len() != n * state {
        return Err(Error::DimensionMismatch(format!(
            "state vector has {} entries, expected {}",
            states.len(),
            n * state
        )));
    }
    let e_dim = it.edge.out_dim();

    // alignment offsets and corrected centers (pure per vertex)
    let offset_rows: Vec<(Option<MlpCache>, [f64; 3])> = (0..n)
        .into_par_iter()
        .map(|v| {
            let s_v = &states[v * state..(v + 1) * state];
            let p = graph.vertices[v].pos();
            if want_cache {
                let c = it.offset.forward_cached(s_v);
                let dx = it.offset.output(&c);
                let corrected = [p[0] - dx[0], p[1] - dx[1], p[2] - dx[2]];
                (Some(c), corrected)
            } else {
                let dx = it.offset.forward(s_v);
                (None, [p[0] - dx[0], p[1] - dx[1], p[2] - dx[2]])
            }
        })
        .collect();
    let corrected: Vec<[f64; 3]> = offset_rows.iter().map(|(_, c)| *c).collect();
    let offset_caches: Vec<MlpCache> = if want_cache {
        offset_rows.into_iter().map(|(c, _)| c.expect("cached")).collect()
    } else {
        Vec::new()
    };

    // per-edge messages, computed in parallel blocks, folded into the
    // per-vertex max in edge-list order (first maximum wins ties)
    let mut acc = vec![f64::NEG_INFINITY; n * e_dim];
    let mut winners = if want_cache { vec![NO_WINNER; n * e_dim] } else { Vec::new() };
    let mut has_in = vec![false; n];
    for block_start in (0..graph.edges.len()).step_by(EDGE_BLOCK) {
        let block = &graph.edges[block_start..(block_start + EDGE_BLOCK).min(graph.edges.len())];
        let block_msgs: Vec<Vec<f64>> = block
            .par_iter()
            .map(|&(i, j)| {
                let mut buf = vec![0.0; it.edge.in_dim()];
                edge_input(&mut buf, encoder, &corrected, graph, states, state, i as usize, j as usize)?;
                Ok(it.edge.forward(&buf))
            })
            .collect::<Result<_>>()?;
        for (off, (&(i, _j), msg)) in block.iter().zip(&block_msgs).enumerate() {
            let i = i as usize;
            has_in[i] = true;
            let row = &mut acc[i * e_dim..(i + 1) * e_dim];
            for (d, &m) in msg.iter().enumerate() {
                if m > row[d] {
                    row[d] = m;
                    if want_cache {
                        winners[i * e_dim + d] = (block_start + off) as u32;
                    }
                }
            }
        }
    }
    for v in 0..n {
        if !has_in[v] {
            acc[v * e_dim..(v + 1) * e_dim].fill(0.0);
        }
    }

    // residual update (pure per vertex)
    let update_rows: Vec<(Option<MlpCache>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let msg = &acc[v * e_dim..(v + 1) * e_dim];
            if want_cache {
                let c = it.update.forward_cached(msg);
                let u = it.update.output(&c).to_vec();
                (Some(c), u)
            } else {
                (None, it.update.forward(msg))
            }
        })
        .collect();
    let mut next = vec![0.0; n * state];
    let mut update_caches = Vec::with_capacity(if want_cache { n } else { 0 });
    for (v, (c, upd)) in update_rows.into_iter().enumerate() {
        for d in 0..state {
            next[v * state + d] = upd[d] + states[v * state + d];
        }
        if want_cache {
            update_caches.push(c.expect("cached"));
        }
    }

    let cache = want_cache.then(|| IterCache {
        offset_caches,
        corrected,
        update_caches,
        winners,
        has_in,
    });
    Ok((next, cache))
}

fn heads(params: &GnnParams, states: &[f64]) -> ForwardOutput {
    let state = params.state_width();
    let n = states.len() / state;
    let m = params.num_classes();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let trunk_out = params.trunk.forward(&states[v * state..(v + 1) * state]);
            (
                params.class_head.forward(&trunk_out),
                params.loc_head.forward(&trunk_out),
            )
        })
        .collect();
    let mut class_logits = vec![0.0; n * m];
    let mut loc = vec![0.0; n * 7];
    for (v, (cls, lc)) in rows.into_iter().enumerate() {
        class_logits[v * m..(v + 1) * m].copy_from_slice(&cls);
        loc[v * 7..(v + 1) * 7].copy_from_slice(&lc);
    }
    ForwardOutput { class_logits, loc, num_classes: m }
}

/// Full forward pass for inference: pooling, T iterations, trunk and heads.
pub fn forward(
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    pool_radius: f64,
    params: &GnnParams,
) -> Result<ForwardOutput> {
    let mut states = pointset_pool(graph, cloud, encoder, pool_radius, params)?;
    for t in 0..params.num_iterations() {
        states = gnn_iteration(graph, &states, params, t, encoder)?;
    }
    Ok(heads(params, &states))
}

/// Everything the backward pass needs.
pub struct ForwardCache {
    pub output: ForwardOutput,
    pool: PoolCache,
    /// States s^0 .. s^T.
    states: Vec<Vec<f64>>,
    iters: Vec<IterCache>,
    trunk_caches: Vec<MlpCache>,
    class_caches: Vec<MlpCache>,
    loc_caches: Vec<MlpCache>,
}

pub fn forward_cached(
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    pool_radius: f64,
    params: &GnnParams,
) -> Result<ForwardCache> {
    let (s0, pool) = pointset_pool_cached(graph, cloud, encoder, pool_radius, params)?;
    let mut states = vec![s0];
    let mut iters = Vec::with_capacity(params.num_iterations());
    for t in 0..params.num_iterations() {
        let (next, cache) =
            gnn_iteration_cached(graph, states.last().expect("s0"), params, t, encoder)?;
        states.push(next);
        iters.push(cache);
    }

    let state = params.state_width();
    let m = params.num_classes();
    let s_final = states.last().expect("states");
    let n = graph.vertices.len();
    let head_rows: Vec<(MlpCache, MlpCache, MlpCache)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let tc = params.trunk.forward_cached(&s_final[v * state..(v + 1) * state]);
            let cc = params.class_head.forward_cached(params.trunk.output(&tc));
            let lc = params.loc_head.forward_cached(params.trunk.output(&tc));
            (tc, cc, lc)
        })
        .collect();
    let mut class_logits = vec![0.0; n * m];
    let mut loc = vec![0.0; n * 7];
    let mut trunk_caches = Vec::with_capacity(n);
    let mut class_caches = Vec::with_capacity(n);
    let mut loc_caches = Vec::with_capacity(n);
    for (v, (tc, cc, lc)) in head_rows.into_iter().enumerate() {
        class_logits[v * m..(v + 1) * m].copy_from_slice(params.class_head.output(&cc));
        loc[v * 7..(v + 1) * 7].copy_from_slice(params.loc_head.output(&lc));
        trunk_caches.push(tc);
        class_caches.push(cc);
        loc_caches.push(lc);
    }

    Ok(ForwardCache {
        output: ForwardOutput { class_logits, loc, num_classes: m },
        pool,
        states,
        iters,
        trunk_caches,
        class_caches,
        loc_caches,
    })
}

/// Fixed vertex chunks for the backward pass.
fn vertex_chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(VERTEX_CHUNK)
        .map(|lo| (lo, (lo + VERTEX_CHUNK).min(n)))
        .collect()
}

struct HeadChunkOut {
    class: Mlp,
    loc: Mlp,
    trunk: Mlp,
    grad_state: Vec<f64>,
}

struct IterChunkOut {
    edge: Mlp,
    update: Mlp,
    /// (neighbor vertex, gradient into its state at t).
    scatters: Vec<(u32, Vec<f64>)>,
    /// Gradient on each chunk vertex's alignment offset.
    dx: Vec<[f64; 3]>,
}

struct OffsetChunkOut {
    offset: Mlp,
    /// Per chunk vertex: gradient into its own state at t.
    own: Vec<Vec<f64>>,
}

struct PoolChunkOut {
    embedding: Mlp,
}

/// Reverse pass: accumulate parameter gradients for upstream gradients on the
/// head outputs. Work parallelizes over fixed vertex chunks; per-chunk
/// gradient buffers reduce in chunk order, so results are bit-identical for
/// any thread count.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    graph: &Graph,
    cloud: &PointCloud,
    encoder: Encoder,
    params: &GnnParams,
    cache: &ForwardCache,
    grad_logits: &[f64],
    grad_loc: &[f64],
    grads: &mut GnnParams,
) -> Result<()> {
    let n = graph.vertices.len();
    let state = params.state_width();
    let m = params.num_classes();
    let geo_len = encoder.geo_len();
    let chunks = vertex_chunks(n);

    // heads and trunk
    let head_outs: Vec<HeadChunkOut> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out = HeadChunkOut {
                class: params.class_head.zeros_like(),
                loc: params.loc_head.zeros_like(),
                trunk: params.trunk.zeros_like(),
                grad_state: vec![0.0; (hi - lo) * state],
            };
            for v in lo..hi {
                let g_cls = &grad_logits[v * m..(v + 1) * m];
                let g_loc = &grad_loc[v * 7..(v + 1) * 7];
                let mut g_trunk =
                    params
                        .class_head
                        .backward(&cache.class_caches[v], g_cls, &mut out.class);
                let g_trunk_loc =
                    params.loc_head.backward(&cache.loc_caches[v], g_loc, &mut out.loc);
                for (a, b) in g_trunk.iter_mut().zip(&g_trunk_loc) {
                    *a += b;
                }
                let g_s = params
                    .trunk
                    .backward(&cache.trunk_caches[v], &g_trunk, &mut out.trunk);
                out.grad_state[(v - lo) * state..(v - lo + 1) * state].copy_from_slice(&g_s);
            }
            out
        })
        .collect();
    let mut grad_state = vec![0.0; n * state];
    for (&(lo, _), out) in chunks.iter().zip(head_outs) {
        grads.class_head.add_from(&out.class);
        grads.loc_head.add_from(&out.loc);
        grads.trunk.add_from(&out.trunk);
        grad_state[lo * state..lo * state + out.grad_state.len()]
            .copy_from_slice(&out.grad_state);
    }

    // iterations, last to first
    for t in (0..params.num_iterations()).rev() {
        let it = &params.iterations[t];
        let itc = &cache.iters[t];
        let states_t = &cache.states[t];
        let e_dim = it.edge.out_dim();

        // residual: gradient w.r.t. s^t starts as the gradient w.r.t. s^{t+1}
        let mut grad_prev = grad_state.clone();

        // per chunk: update backward, winning-edge recompute, offset grads
        let iter_outs: Vec<Result<IterChunkOut>> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut out = IterChunkOut {
                    edge: it.edge.zeros_like(),
                    update: it.update.zeros_like(),
                    scatters: Vec::new(),
                    dx: vec![[0.0; 3]; hi - lo],
                };
                let mut edge_buf = vec![0.0; it.edge.in_dim()];
                for v in lo..hi {
                    let g_max = it.update.backward(
                        &itc.update_caches[v],
                        &grad_state[v * state..(v + 1) * state],
                        &mut out.update,
                    );
                    if !itc.has_in[v] {
                        continue; // the zero max vector is a constant
                    }
                    // group winning dims by edge (ascending edge index)
                    let win = &itc.winners[v * e_dim..(v + 1) * e_dim];
                    let mut by_edge: std::collections::BTreeMap<u32, Vec<usize>> =
                        std::collections::BTreeMap::new();
                    for (d, &k) in win.iter().enumerate() {
                        if k != NO_WINNER && g_max[d] != 0.0 {
                            by_edge.entry(k).or_default().push(d);
                        }
                    }
                    for (&k, dims) in &by_edge {
                        let (i, j) = graph.edges[k as usize];
                        let (i, j) = (i as usize, j as usize);
                        debug_assert_eq!(i, v);
                        edge_input(
                            &mut edge_buf,
                            encoder,
                            &itc.corrected,
                            graph,
                            states_t,
                            state,
                            i,
                            j,
                        )?;
                        let ec = it.edge.forward_cached(&edge_buf);
                        let mut g_msg = vec![0.0; e_dim];
                        for &d in dims {
                            g_msg[d] = g_max[d];
                        }
                        let g_in = it.edge.backward(&ec, &g_msg, &mut out.edge);
                        // split the input gradient: geometry -> corrected
                        // center, reflectance constant, tail -> neighbor state
                        let g_center = encoder.backward_center(
                            itc.corrected[i],
                            graph.vertices[j].pos(),
                            &g_in[..geo_len],
                        )?;
                        for a in 0..3 {
                            // corrected = position - offset
                            out.dx[v - lo][a] -= g_center[a];
                        }
                        out.scatters.push((j as u32, g_in[geo_len + 1..].to_vec()));
                    }
                }
                Ok(out)
            })
            .collect();
        let mut dx_all = vec![[0.0f64; 3]; n];
        let g_it = &mut grads.iterations[t];
        for (&(lo, _), out) in chunks.iter().zip(iter_outs) {
            let out = out?;
            g_it.edge.add_from(&out.edge);
            g_it.update.add_from(&out.update);
            for (j, g) in out.scatters {
                let j = j as usize;
                for d in 0..state {
                    grad_prev[j * state + d] += g[d];
                }
            }
            for (off, d) in out.dx.into_iter().enumerate() {
                dx_all[lo + off] = d;
            }
        }

        // offsets: through the offset MLP into each vertex's own state at t
        let offset_outs: Vec<OffsetChunkOut> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut out = OffsetChunkOut {
                    offset: it.offset.zeros_like(),
                    own: Vec::with_capacity(hi - lo),
                };
                for v in lo..hi {
                    if dx_all[v] == [0.0; 3] {
                        out.own.push(Vec::new());
                        continue;
                    }
                    let g_s = it
                        .offset
                        .backward(&itc.offset_caches[v], &dx_all[v], &mut out.offset);
                    out.own.push(g_s);
                }
                out
            })
            .collect();
        for (&(lo, _), out) in chunks.iter().zip(offset_outs) {
            g_it.offset.add_from(&out.offset);
            for (off, g) in out.own.into_iter().enumerate() {
                let v = lo + off;
                for (d, val) in g.into_iter().enumerate() {
                    grad_prev[v * state + d] += val;
                }
            }
        }

        grad_state = grad_prev;
    }

    // pooling: gradient on s^0 routes to the winning raw points
    let pool_outs: Vec<Result<PoolChunkOut>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out = PoolChunkOut { embedding: params.embedding.zeros_like() };
            let mut feat = vec![0.0; encoder.feature_len()];
            for v in lo..hi {
                let ids = &cache.pool.gathered[v];
                if ids.is_empty() {
                    continue;
                }
                let win = &cache.pool.winners[v * state..(v + 1) * state];
                let mut by_point: std::collections::BTreeMap<u32, Vec<usize>> =
                    std::collections::BTreeMap::new();
                for (d, &pos) in win.iter().enumerate() {
                    if pos != NO_WINNER && grad_state[v * state + d] != 0.0 {
                        by_point.entry(pos).or_default().push(d);
                    }
                }
                let vpos = graph.vertices[v].pos();
                for (&pos, dims) in &by_point {
                    let raw = &cloud.points[ids[pos as usize] as usize];
                    let enc = encoder.encode(vpos, raw.pos(), raw.reflectance)?;
                    enc.write_to(&mut feat);
                    let ec = params.embedding.forward_cached(&feat);
                    let mut g_emb = vec![0.0; state];
                    for &d in dims {
                        g_emb[d] = grad_state[v * state + d];
                    }
                    params.embedding.backward(&ec, &g_emb, &mut out.embedding);
                }
            }
            Ok(out)
        })
        .collect();
    for out in pool_outs {
        grads.embedding.add_from(&out?.embedding);
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncoderKind;
    use crate::graph::build_radius_graph;
    use crate::io::RunConfig;
    use crate::types::Point;

    fn tiny_cfg(kind: EncoderKind) -> RunConfig {
        RunConfig {
            encoder: kind,
            embedding_mlp: vec![6, 8],
            trunk_mlp: vec![6],
            offset_mlp_hidden: vec![4],
            edge_mlp: vec![6],
            update_mlp_hidden: vec![4],
            class_head_hidden: vec![4],
            loc_head: vec![4, 7],
            iterations: 2,
            ..RunConfig::default()
        }
    }

    fn line_cloud() -> PointCloud {
        PointCloud::new(
            vec![
                Point::new(3.0, 0.5, 0.0, 0.5),
                Point::new(4.0, 0.2, 0.0, 0.25),
                Point::new(5.0, -0.1, 0.0, 0.75),
            ],
            "toy",
        )
    }

    #[test]
    fn pool_singleton_equals_embedding() {
        let cfg = tiny_cfg(EncoderKind::Relative);
        let params = GnnParams::init(&cfg);
        let enc = cfg.encoder_config();
        let cloud = PointCloud::new(vec![Point::new(3.0, 1.0, 0.0, 0.4)], "one");
        let graph = build_radius_graph(&cloud.points, 1.0, 4).unwrap();
        let states = pointset_pool(&graph, &cloud, enc, 0.5, &params).unwrap();
        // one raw point at the vertex: relative geo is zero, feature (0,0,0,refl)
        let expected = params.embedding.forward(&[0.0, 0.0, 0.0, 0.4]);
        assert_eq!(states, expected);
    }

    #[test]
    fn pool_is_permutation_invariant() {
        let cfg = tiny_cfg(EncoderKind::AngleRelative);
        let params = GnnParams::init(&cfg);
        let enc = cfg.encoder_config();
        let cloud = line_cloud();
        let graph = build_radius_graph(&cloud.points, 2.0, 8).unwrap();
        let a = pointset_pool(&graph, &cloud, enc, 1.5, &params).unwrap();
        let mut rev = cloud.points.clone();
        rev.reverse();
        let cloud_rev = PointCloud::new(rev, "toy-rev");
        // same vertex set, raw points permuted
        let b = pointset_pool(&graph, &cloud_rev, enc, 1.5, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pool_zero_weight_embedding_gives_bias() {
        let cfg = tiny_cfg(EncoderKind::Relative);
        let mut params = GnnParams::init(&cfg);
        for l in &mut params.embedding.layers {
            l.w.iter_mut().for_each(|v| *v = 0.0);
            l.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let bias = [0.3, -0.2, 0.9, 0.1, 0.0, -0.5, 0.7, 0.2];
        params.embedding.layers.last_mut().unwrap().b = bias.to_vec();
        let cloud = line_cloud();
        let graph = build_radius_graph(&cloud.points, 2.0, 8).unwrap();
        let states = pointset_pool(&graph, &cloud, cfg.encoder_config(), 1.5, &params).unwrap();
        for v in 0..graph.vertices.len() {
            assert_eq!(&states[v * 8..(v + 1) * 8], &bias);
        }
    }

    #[test]
    fn iteration_empty_in_edges_uses_zero_max() {
        let cfg = tiny_cfg(EncoderKind::Relative);
        let params = GnnParams::init(&cfg);
        let enc = cfg.encoder_config();
        let vertices = vec![Point::new(3.0, 0.0, 0.0, 0.5), Point::new(30.0, 0.0, 0.0, 0.5)];
        let graph = build_radius_graph(&vertices, 1.0, 4).unwrap();
        assert!(graph.edges.is_empty());
        let state = params.state_width();
        let states: Vec<f64> = (0..vertices.len() * state).map(|k| 0.1 * k as f64).collect();
        let next = gnn_iteration(&graph, &states, &params, 0, enc).unwrap();
        for v in 0..vertices.len() {
            let upd = params.iterations[0].update.forward(&vec![0.0; 6]);
            for d in 0..state {
                assert_eq!(next[v * state + d], upd[d] + states[v * state + d]);
            }
        }
    }

    #[test]
    fn iteration_out_of_range() {
        let cfg = tiny_cfg(EncoderKind::Relative);
        let params = GnnParams::init(&cfg);
        let vertices = vec![Point::new(3.0, 0.0, 0.0, 0.5)];
        let graph = build_radius_graph(&vertices, 1.0, 4).unwrap();
        let states = vec![0.0; params.state_width()];
        assert!(matches!(
            gnn_iteration(&graph, &states, &params, 5, cfg.encoder_config()),
            Err(Error::IterationOutOfRange { t: 5, .. })
        ));
    }

    #[test]
    fn residual_identity_with_zeroed_update() {
        // zero-initialized update MLPs leave the state exactly unchanged for
        // any number of iterations; doubling T changes nothing
        let cfg = tiny_cfg(EncoderKind::Angle);
        let params = GnnParams::init(&cfg); // update finals zeroed, but hidden active
        let mut identity = params.clone();
        for it in &mut identity.iterations {
            for l in &mut it.update.layers {
                l.w.iter_mut().for_each(|v| *v = 0.0);
                l.b.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let cloud = line_cloud();
        let graph = build_radius_graph(&cloud.points, 2.0, 8).unwrap();
        let enc = cfg.encoder_config();
        let s0 = pointset_pool(&graph, &cloud, enc, 1.5, &identity).unwrap();
        let mut s = s0.clone();
        for t in 0..identity.num_iterations() {
            s = gnn_iteration(&graph, &s, &identity, t, enc).unwrap();
        }
        assert_eq!(s, s0);
        // default init zeroes only the final update layer; still identity
        let s0 = pointset_pool(&graph, &cloud, enc, 1.5, &params).unwrap();
        let s1 = gnn_iteration(&graph, &s0, &params, 0, enc).unwrap();
        assert_eq!(s0, s1);
    }

    #[test]
    fn iteration_matches_hand_computed_toy() {
        // 1-wide toy on a 3-vertex path, values computed independently by hand
        let vertices = vec![
            Point::new(0.0, 0.0, 0.0, 0.5),
            Point::new(1.0, 0.0, 0.0, 0.25),
            Point::new(2.0, 0.0, 0.0, 0.75),
        ];
        let graph = build_radius_graph(&vertices, 1.5, 8).unwrap();
        let cfg = RunConfig {
            encoder: EncoderKind::Relative,
            embedding_mlp: vec![1],
            trunk_mlp: vec![1],
            offset_mlp_hidden: vec![],
            edge_mlp: vec![1],
            update_mlp_hidden: vec![],
            class_head_hidden: vec![],
            loc_head: vec![7],
            iterations: 1,
            ..RunConfig::default()
        };
        let mut params = GnnParams::init(&cfg);
        let it = &mut params.iterations[0];
        it.offset.layers[0].w = vec![0.1, -0.2, 0.05];
        it.offset.layers[0].b = vec![0.01, 0.02, -0.03];
        it.edge.layers[0].w = vec![0.3, -0.1, 0.2, 0.4, -0.5];
        it.edge.layers[0].b = vec![0.05];
        it.update.layers[0].w = vec![0.7];
        it.update.layers[0].b = vec![-0.02];
        let states = vec![0.1, -0.2, 0.3];
        let next =
            gnn_iteration(&graph, &states, &params, 0, Encoder::new(EncoderKind::Relative, false))
                .unwrap();
        let expected = [0.0443, 0.1419, 0.6559];
        for (a, b) in next.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{next:?}");
        }
    }

    #[test]
    fn edge_permutation_leaves_states_bit_identical() {
        let cfg = tiny_cfg(EncoderKind::AngleRelative);
        let mut params = GnnParams::init(&cfg);
        // make updates non-trivial so the test is not vacuous
        for it in &mut params.iterations {
            it.update.zero_final_layer();
            it.update.layers.last_mut().unwrap().b =
                (0..params.embedding.out_dim()).map(|k| 0.01 * k as f64).collect();
        }
        let mut rng = crate::rng::derive_rng(3, "perm");
        use rand::seq::SliceRandom;
        use rand::Rng;
        let vertices: Vec<Point> = (0..30)
            .map(|_| {
                Point::new(
                    rng.gen_range(3.0..9.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(vertices.clone(), "perm");
        let graph = build_radius_graph(&vertices, 2.5, 16).unwrap();
        let enc = cfg.encoder_config();
        let s0 = pointset_pool(&graph, &cloud, enc, 1.0, &params).unwrap();
        let a = gnn_iteration(&graph, &s0, &params, 0, enc).unwrap();
        let mut edges = graph.edges.clone();
        edges.shuffle(&mut rng);
        let permuted = Graph::from_parts(graph.vertices.clone(), edges, graph.radius);
        let b = gnn_iteration(&permuted, &s0, &params, 0, enc).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let cfg = tiny_cfg(EncoderKind::Angle);
        let params = GnnParams::init(&cfg);
        let cloud = line_cloud();
        let graph = build_radius_graph(&cloud.points, 2.0, 8).unwrap();
        let enc = cfg.encoder_config();
        let out = forward(&graph, &cloud, enc, 1.5, &params).unwrap();
        assert_eq!(out.num_classes, 4);
        assert_eq!(out.class_logits.len(), 3 * 4);
        assert_eq!(out.loc.len(), 3 * 7);
        let again = forward(&graph, &cloud, enc, 1.5, &params).unwrap();
        assert_eq!(out.class_logits, again.class_logits);
        // cached path computes the same outputs
        let cached = forward_cached(&graph, &cloud, enc, 1.5, &params).unwrap();
        assert_eq!(cached.output.class_logits, out.class_logits);
        assert_eq!(cached.output.loc, out.loc);
    }

    #[test]
    fn forward_is_thread_count_invariant() {
        let cfg = tiny_cfg(EncoderKind::AngleRelative);
        let params = GnnParams::init(&cfg);
        let mut rng = crate::rng::derive_rng(8, "threads");
        use rand::Rng;
        let vertices: Vec<Point> = (0..80)
            .map(|_| {
                Point::new(
                    rng.gen_range(3.0..10.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(vertices.clone(), "tc");
        let graph = build_radius_graph(&vertices, 2.0, 16).unwrap();
        let enc = cfg.encoder_config();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| forward(&graph, &cloud, enc, 1.0, &params).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert!(a
            .class_logits
            .iter()
            .zip(&b.class_logits)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.loc.iter().zip(&b.loc).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let cfg = tiny_cfg(EncoderKind::Relative);
        let params = GnnParams::init(&cfg);
        // wrong encoder: angle_relative has d_enc 7, embedding expects 4
        let bad = Encoder::new(EncoderKind::AngleRelative, true);
        let cloud = line_cloud();
        let graph = build_radius_graph(&cloud.points, 2.0, 8).unwrap();
        assert!(matches!(
            forward(&graph, &cloud, bad, 1.5, &params),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
