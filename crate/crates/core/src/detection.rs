//! Scene-level boxes from per-vertex predictions: 7-DoF decoding, rotated
//! bird's-eye-view IoU, and duplicate merging.

use crate::error::{Error, Result};
use crate::types::{Box7DoF, Category, CategorySet, GroundTruthBox, Point, ViewBin};

/// Merge parameters. Per-category evaluation thresholds live in `evaluation`.
#[derive(Debug, Clone, Copy)]
pub struct MergeConfig {
    pub iou_threshold: f64,
    pub score_floor: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig { iou_threshold: 0.5, score_floor: 0.3 }
    }
}

/// Encode a ground-truth box as the 7 regression targets for a vertex inside
/// it: median-normalized center offsets, log-ratio dimensions, and the
/// bin-relative yaw scaled by pi/2.
pub fn encode_box_target(gt: &GroundTruthBox, vertex: &Point) -> Result<[f64; 7]> {
    let category = gt
        .category
        .as_category()
        .ok_or(Error::NonForegroundCategory(usize::MAX))?;
    if !gt.contains(vertex.pos()) {
        return Err(Error::VertexOutsideBox);
    }
    let m = category.medians();
    let folded = crate::types::fold_yaw(gt.yaw);
    let bin = crate::types::view_bin_of(gt.yaw);
    Ok([
        (gt.cx - vertex.x) / m.length,
        (gt.cy - vertex.y) / m.height,
        (gt.cz - vertex.z) / m.width,
        (gt.l / m.length).ln(),
        (gt.h / m.height).ln(),
        (gt.w / m.width).ln(),
        (folded - bin.center()) / std::f64::consts::FRAC_PI_2,
    ])
}

/// Exact inverse of [`encode_box_target`] for a given vertex, category and
/// view bin; `score` is the winning-class softmax probability.
pub fn decode_box(
    vertex: &Point,
    loc_out: &[f64; 7],
    category: Category,
    view: ViewBin,
    score: f64,
) -> Box7DoF {
    let m = category.medians();
    Box7DoF {
        category,
        cx: vertex.x + loc_out[0] * m.length,
        cy: vertex.y + loc_out[1] * m.height,
        cz: vertex.z + loc_out[2] * m.width,
        l: m.length * loc_out[3].exp(),
        h: m.height * loc_out[4].exp(),
        w: m.width * loc_out[5].exp(),
        yaw: view.center() + loc_out[6] * std::f64::consts::FRAC_PI_2,
        score,
    }
}

/// The four BEV corners of a box's yaw-rotated footprint, counterclockwise.
pub fn bev_corners(cx: f64, cy: f64, l: f64, w: f64, yaw: f64) -> [[f64; 2]; 4] {
    let (s, c) = yaw.sin_cos();
    let half = [
        (l * 0.5, w * 0.5),
        (-l * 0.5, w * 0.5),
        (-l * 0.5, -w * 0.5),
        (l * 0.5, -w * 0.5),
    ];
    half.map(|(dx, dy)| [cx + c * dx - s * dy, cy + s * dx + c * dy])
}

/// Shoelace area of a simple polygon (positive for counterclockwise winding).
fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc.abs() * 0.5
}

/// Sutherland-Hodgman clip of `subject` against convex `clip` (CCW).
fn clip_polygon(subject: &[[f64; 2]], clip: &[[f64; 2]; 4]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for k in 0..4 {
        if output.is_empty() {
            break;
        }
        let a = clip[k];
        let b = clip[(k + 1) % 4];
        // signed distance to the edge line; inside is the left half-plane
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut output);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let s_cur = side(cur);
            let s_prev = side(prev);
            let crosses = (s_cur >= 0.0) != (s_prev >= 0.0);
            if crosses {
                let t = s_prev / (s_prev - s_cur);
                output.push([
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ]);
            }
            if s_cur >= 0.0 {
                output.push(cur);
            }
        }
    }
    output
}

/// Intersection-over-union of the two yaw-rotated rectangles in the x-y plane.
/// Height and z extent are ignored; degenerate zero-area boxes return 0.
pub fn bev_iou(a: &Box7DoF, b: &Box7DoF) -> f64 {
    bev_iou_rect(
        (a.cx, a.cy, a.l, a.w, a.yaw),
        (b.cx, b.cy, b.l, b.w, b.yaw),
    )
}

pub fn bev_iou_rect(a: (f64, f64, f64, f64, f64), b: (f64, f64, f64, f64, f64)) -> f64 {
    let ca = bev_corners(a.0, a.1, a.2, a.3, a.4);
    let cb = bev_corners(b.0, b.1, b.2, b.3, b.4);
    let area_a = a.2 * a.3;
    let area_b = b.2 * b.3;
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = polygon_area(&clip_polygon(&ca, &cb));
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// IoU of a detection against a ground-truth footprint.
pub fn bev_iou_det_gt(d: &Box7DoF, g: &GroundTruthBox) -> f64 {
    bev_iou_rect((d.cx, d.cy, d.l, d.w, d.yaw), (g.cx, g.cy, g.l, g.w, g.yaw))
}

/// Score-weighted circular mean of yaws on doubled angles, which respects the
/// pi-symmetry of boxes.
fn fuse_yaw(cluster: &[&Box7DoF]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for b in cluster {
        s += b.score * (2.0 * b.yaw).sin();
        c += b.score * (2.0 * b.yaw).cos();
    }
    0.5 * s.atan2(c)
}

fn fuse_cluster(cluster: &[&Box7DoF]) -> Box7DoF {
    if cluster.len() == 1 {
        // exact: keeps stable fusion passes an identity
        return *cluster[0];
    }
    let w_total: f64 = cluster.iter().map(|b| b.score).sum();
    let mean = |f: fn(&Box7DoF) -> f64| -> f64 {
        cluster.iter().map(|b| b.score * f(b)).sum::<f64>() / w_total
    };
    Box7DoF {
        category: cluster[0].category,
        cx: mean(|b| b.cx),
        cy: mean(|b| b.cy),
        cz: mean(|b| b.cz),
        l: mean(|b| b.l),
        w: mean(|b| b.w),
        h: mean(|b| b.h),
        yaw: fuse_yaw(cluster),
        score: cluster.iter().map(|b| b.score).fold(f64::MIN, f64::max),
    }
}

/// One greedy fusion pass over same-category boxes in descending score order.
/// Each seed absorbs all not-yet-kept boxes overlapping it above the
/// threshold; the emitted box is the score-weighted fusion of the cluster.
fn merge_pass(boxes: &[Box7DoF], cfg: &MergeConfig) -> Vec<Box7DoF> {
    // stable order: score descending, ties by earlier input index
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));

    let mut taken = vec![false; boxes.len()];
    let mut out = Vec::new();
    for &seed in &order {
        if taken[seed] {
            continue;
        }
        taken[seed] = true;
        let mut cluster = vec![&boxes[seed]];
        for &cand in &order {
            if taken[cand] || boxes[cand].category != boxes[seed].category {
                continue;
            }
            if bev_iou(&boxes[seed], &boxes[cand]) > cfg.iou_threshold {
                taken[cand] = true;
                cluster.push(&boxes[cand]);
            }
        }
        out.push(fuse_cluster(&cluster));
    }
    out
}

/// Merge per-vertex box predictions into scene detections. Boxes below the
/// score floor are discarded; fusion passes repeat until no two same-category
/// outputs overlap above the threshold, which makes the operation idempotent.
/// Output is sorted by score descending, ties by earlier input index.
pub fn merge_boxes(boxes: &[Box7DoF], cfg: &MergeConfig) -> Vec<Box7DoF> {
    let mut current: Vec<Box7DoF> = boxes
        .iter()
        .filter(|b| b.score >= cfg.score_floor)
        .copied()
        .collect();
    loop {
        let next = merge_pass(&current, cfg);
        let stable = next.len() == current.len();
        current = next;
        if stable {
            break;
        }
    }
    let mut order: Vec<usize> = (0..current.len()).collect();
    order.sort_by(|&a, &b| current[b].score.total_cmp(&current[a].score).then(a.cmp(&b)));
    order.into_iter().map(|i| current[i]).collect()
}

/// Decode per-vertex head outputs into candidate boxes: every vertex whose
/// argmax class is a foreground view class emits one box scored by its
/// softmax probability.
pub fn decode_vertex_predictions(
    vertices: &[Point],
    class_logits: &[f64],
    loc_out: &[f64],
    set: CategorySet,
) -> Vec<Box7DoF> {
    let m = set.num_classes();
    let mut out = Vec::new();
    for (v, vertex) in vertices.iter().enumerate() {
        let logits = &class_logits[v * m..(v + 1) * m];
        let (best, prob) = softmax_argmax(logits);
        let Some((category, view)) = set.foreground_of_class(best) else {
            continue;
        };
        let loc: &[f64] = &loc_out[v * 7..(v + 1) * 7];
        let loc7: [f64; 7] = loc.try_into().expect("7 values");
        out.push(decode_box(vertex, &loc7, category, view, prob));
    }
    out
}

/// Argmax class plus its softmax probability (ties to the lowest index).
pub fn softmax_argmax(logits: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (k, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = k;
        }
    }
    let max = logits[best];
    let denom: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    (best, 1.0 / denom)
}
