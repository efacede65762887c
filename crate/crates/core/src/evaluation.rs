//! KITTI-style per-category, per-difficulty average precision.
//!
//! Matching is greedy one-to-one per frame; the precision/recall curve is
//! interpolated on the classic 11-point recall grid {0.0, 0.1, ..., 1.0} and
//! reported in [0, 100]. Evaluating difficulty D uses ground truth of
//! difficulty <= D (nested pools), and detections overlapping a DontCare
//! region count neither as hit nor as miss.

use crate::detection::{bev_iou_det_gt, bev_iou_rect};
use crate::error::{Error, Result};
use crate::types::{Box7DoF, Category, Difficulty, GroundTruthBox, LabelCategory};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// (category, IoU threshold) pairs; KITTI convention 0.7 car, 0.5 ped/cyc.
    pub iou_thresholds: Vec<(Category, f64)>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: vec![
                (Category::Car, 0.7),
                (Category::Pedestrian, 0.5),
                (Category::Cyclist, 0.5),
            ],
        }
    }
}

impl EvalConfig {
    pub fn threshold_for(&self, cat: Category) -> f64 {
        self.iou_thresholds
            .iter()
            .find(|(c, _)| *c == cat)
            .map(|&(_, t)| t)
            .unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    pub category: Category,
    pub difficulty: Difficulty,
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub n_gt: usize,
}

/// Per-detection outcome of matching one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    TruePositive,
    FalsePositive,
    /// Overlaps a DontCare region; excluded from the ranking entirely.
    Ignored,
}

/// Greedy matching of one frame's same-category detections (sorted by score
/// descending) against ground truth of difficulty <= `difficulty`. Each GT
/// matches at most once; an unmatched detection with BEV IoU > 0.5 against a
/// DontCare box is ignored.
pub fn match_detections(
    dets: &[Box7DoF],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
    difficulty: Difficulty,
) -> Result<Vec<MatchFlag>> {
    if dets.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(Error::UnsortedDetections);
    }
    let pool: Vec<&GroundTruthBox> = gts
        .iter()
        .filter(|g| {
            g.category != LabelCategory::DontCare
                && g.difficulty.map(|d| d <= difficulty).unwrap_or(false)
        })
        .collect();
    let dontcare: Vec<&GroundTruthBox> = gts
        .iter()
        .filter(|g| g.category == LabelCategory::DontCare)
        .collect();

    let mut matched = vec![false; pool.len()];
    let mut flags = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(usize, f64)> = None;
        for (k, g) in pool.iter().enumerate() {
            if matched[k] || g.category.as_category() != Some(d.category) {
                continue;
            }
            let iou = bev_iou_det_gt(d, g);
            if best.map(|(_, b)| iou > b).unwrap_or(true) {
                best = Some((k, iou));
            }
        }
        match best {
            Some((k, iou)) if iou >= iou_threshold => {
                matched[k] = true;
                flags.push(MatchFlag::TruePositive);
            }
            _ => {
                let in_dontcare = dontcare.iter().any(|g| {
                    bev_iou_rect(
                        (d.cx, d.cy, d.l, d.w, d.yaw),
                        (g.cx, g.cy, g.l, g.w, g.yaw),
                    ) > 0.5
                });
                flags.push(if in_dontcare {
                    MatchFlag::Ignored
                } else {
                    MatchFlag::FalsePositive
                });
            }
        }
    }
    Ok(flags)
}

/// 11-point interpolated average precision in [0, 100] from a ranked TP/FP
/// stream. With no ground truth: 100 if there are no detections, else 0.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if flags.is_empty() { 100.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve = Vec::with_capacity(flags.len());
    for &is_tp in flags {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut acc = 0.0;
    for k in 0..=10 {
        let r = k as f64 / 10.0;
        let p_max = curve
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        acc += p_max;
    }
    acc / 11.0 * 100.0
}

/// Inputs to the report: one detection list and one label list per frame.
pub struct EvalFrames<'a> {
    pub detections: &'a [Vec<Box7DoF>],
    pub ground_truth: &'a [Vec<GroundTruthBox>],
}

/// Compute AP per (category x difficulty): per-frame greedy matching, then a
/// global score ranking across frames.
pub fn evaluate(
    frames: &EvalFrames,
    categories: &[Category],
    cfg: &EvalConfig,
) -> Result<Vec<ApResult>> {
    assert_eq!(frames.detections.len(), frames.ground_truth.len());
    let mut results = Vec::new();
    for &cat in categories {
        for diff in Difficulty::ALL {
            let threshold = cfg.threshold_for(cat);
            // (score, is_tp) across frames, then ranked globally
            let mut ranked: Vec<(f64, bool)> = Vec::new();
            let mut n_gt = 0usize;
            for (dets, gts) in frames.detections.iter().zip(frames.ground_truth) {
                n_gt += gts
                    .iter()
                    .filter(|g| {
                        g.category.as_category() == Some(cat)
                            && g.difficulty.map(|d| d <= diff).unwrap_or(false)
                    })
                    .count();
                let mut cat_dets: Vec<Box7DoF> =
                    dets.iter().filter(|d| d.category == cat).copied().collect();
                cat_dets.sort_by(|a, b| b.score.total_cmp(&a.score));
                let flags = match_detections(&cat_dets, gts, threshold, diff)?;
                for (d, f) in cat_dets.iter().zip(flags) {
                    match f {
                        MatchFlag::TruePositive => ranked.push((d.score, true)),
                        MatchFlag::FalsePositive => ranked.push((d.score, false)),
                        MatchFlag::Ignored => {}
                    }
                }
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
            let flags: Vec<bool> = ranked.iter().map(|&(_, f)| f).collect();
            let tp = flags.iter().filter(|&&f| f).count();
            let fp = flags.len() - tp;
            results.push(ApResult {
                category: cat,
                difficulty: diff,
                ap: average_precision(&flags, n_gt),
                tp,
                fp,
                fn_count: n_gt.saturating_sub(tp),
                n_gt,
            });
        }
    }
    Ok(results)
}

/// CSV report: category, difficulty, AP, TP, FP, FN, GT.
pub fn report_csv(results: &[ApResult]) -> String {
    let mut out = String::from("category,difficulty,ap,tp,fp,fn,gt\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{:.4},{},{},{},{}\n",
            r.category.name(),
            r.difficulty.name(),
            r.ap,
            r.tp,
            r.fp,
            r.fn_count,
            r.n_gt
        ));
    }
    out
}

/// Markdown table with one E/M/H column triple per category.
pub fn report_markdown(results: &[ApResult], categories: &[Category]) -> String {
    let cell = |cat: Category, diff: Difficulty| -> String {
        results
            .iter()
            .find(|r| r.category == cat && r.difficulty == diff)
            .map(|r| format!("{:.2}", r.ap))
            .unwrap_or_else(|| "-".to_string())
    };
    let mut header = String::from("| Encoding |");
    let mut rule = String::from("| --- |");
    for cat in categories {
        header.push_str(&format!(" {}(mAP) E | M | H |", cat.name()));
        rule.push_str(" --- | --- | --- |");
    }
    let mut row = String::from("| result |");
    for &cat in categories {
        row.push_str(&format!(
            " {} | {} | {} |",
            cell(cat, Difficulty::Easy),
            cell(cat, Difficulty::Moderate),
            cell(cat, Difficulty::Hard)
        ));
    }
    format!("{header}\n{rule}\n{row}\n")
}
