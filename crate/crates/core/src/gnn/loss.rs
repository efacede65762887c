//! Training loss: softmax cross-entropy over the class set averaged over all
//! included vertices, plus Huber (delta = 1) on the 7 regression values
//! averaged over foreground vertices. Both terms weigh 1.0. Vertices inside
//! DontCare regions contribute to neither term; with no foreground vertices
//! the localization term is 0 (classification-only step).

use super::targets::FrameTargets;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub loc: f64,
}

const HUBER_DELTA: f64 = 1.0;

#[inline]
fn huber(x: f64) -> f64 {
    let a = x.abs();
    if a <= HUBER_DELTA {
        0.5 * x * x
    } else {
        HUBER_DELTA * (a - 0.5 * HUBER_DELTA)
    }
}

#[inline]
fn huber_grad(x: f64) -> f64 {
    if x.abs() <= HUBER_DELTA {
        x
    } else {
        HUBER_DELTA * x.signum()
    }
}

/// Loss value plus gradients with respect to the head outputs.
pub fn loss_and_grad(
    class_logits: &[f64],
    loc_out: &[f64],
    targets: &FrameTargets,
    num_classes: usize,
) -> (LossBreakdown, Vec<f64>, Vec<f64>) {
    let n = targets.class.len();
    debug_assert_eq!(class_logits.len(), n * num_classes);
    debug_assert_eq!(loc_out.len(), n * 7);

    let n_included = targets.excluded.iter().filter(|&&e| !e).count();
    let n_fg = targets
        .loc
        .iter()
        .zip(&targets.excluded)
        .filter(|(l, &e)| l.is_some() && !e)
        .count();

    let mut grad_logits = vec![0.0; class_logits.len()];
    let mut grad_loc = vec![0.0; loc_out.len()];
    let mut cls_total = 0.0;
    let mut loc_total = 0.0;

    for v in 0..n {
        if targets.excluded[v] {
            continue;
        }
        let logits = &class_logits[v * num_classes..(v + 1) * num_classes];
        let target = targets.class[v];

        // numerically stable log-softmax
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        cls_total += log_z - logits[target];
        if n_included > 0 {
            let scale = 1.0 / n_included as f64;
            let g = &mut grad_logits[v * num_classes..(v + 1) * num_classes];
            for (k, gk) in g.iter_mut().enumerate() {
                let p = (logits[k] - log_z).exp();
                *gk = (p - if k == target { 1.0 } else { 0.0 }) * scale;
            }
        }

        if let Some(target7) = &targets.loc[v] {
            let pred = &loc_out[v * 7..(v + 1) * 7];
            let scale = 1.0 / n_fg as f64;
            let g = &mut grad_loc[v * 7..(v + 1) * 7];
            for k in 0..7 {
                let e = pred[k] - target7[k];
                loc_total += huber(e);
                g[k] = huber_grad(e) * scale;
            }
        }
    }

    let cls = if n_included > 0 { cls_total / n_included as f64 } else { 0.0 };
    let loc = if n_fg > 0 { loc_total / n_fg as f64 } else { 0.0 };
    (
        LossBreakdown { total: cls + loc, cls, loc },
        grad_logits,
        grad_loc,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets_one(class: usize, loc: Option<[f64; 7]>) -> FrameTargets {
        FrameTargets { class: vec![class], loc: vec![loc], excluded: vec![false] }
    }

    #[test]
    fn uniform_logits_give_ln_m() {
        for m in [2usize, 4, 6] {
            let t = targets_one(0, None);
            let (l, _, _) = loss_and_grad(&vec![0.0; m], &[0.0; 7], &t, m);
            assert!((l.cls - (m as f64).ln()).abs() < 1e-12);
            assert_eq!(l.loc, 0.0);
            assert_eq!(l.total, l.cls);
        }
    }

    #[test]
    fn confident_correct_logits_leave_loc_only() {
        let t = targets_one(1, Some([0.0; 7]));
        let mut logits = vec![-1e6, 1e6, -1e6, -1e6];
        let loc = [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let (l, _, _) = loss_and_grad(&mut logits, &loc, &t, 4);
        assert!(l.cls < 1e-10);
        assert!((l.loc - 0.5 * 0.25).abs() < 1e-12); // huber(0.5) = 0.125
    }

    #[test]
    fn huber_switches_to_linear_tail() {
        let t = targets_one(0, Some([0.0; 7]));
        let loc = [3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let (l, _, g) = loss_and_grad(&[0.0, 0.0], &loc, &t, 2);
        assert!((l.loc - (3.0 - 0.5)).abs() < 1e-12);
        assert_eq!(g[0], 1.0); // clipped gradient
    }

    #[test]
    fn excluded_vertices_contribute_nothing() {
        let t = FrameTargets {
            class: vec![0, 1],
            loc: vec![None, Some([0.0; 7])],
            excluded: vec![false, true],
        };
        let logits = vec![1.0, -1.0, 5.0, -5.0];
        let loc = vec![1.0; 14];
        let (l, gl, glc) = loss_and_grad(&logits, &loc, &t, 2);
        // only vertex 0 counts, and it has no box: loc term must vanish
        assert_eq!(l.loc, 0.0);
        assert!(gl[2..].iter().all(|&g| g == 0.0));
        assert!(glc.iter().all(|&g| g == 0.0));
        assert!(l.cls > 0.0);
    }

    #[test]
    fn grad_matches_finite_differences() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(23, "loss-fd");
        let m = 4;
        let n = 3;
        let t = FrameTargets {
            class: vec![1, 3, 0],
            loc: vec![Some([0.1, -0.3, 0.5, 0.0, 2.0, -1.5, 0.2]), None, Some([0.0; 7])],
            excluded: vec![false, false, false],
        };
        let logits: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let loc: Vec<f64> = (0..n * 7).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, gl, gc) = loss_and_grad(&logits, &loc, &t, m);
        let h = 1e-6;
        for k in 0..logits.len() {
            let mut lp = logits.clone();
            let mut lm = logits.clone();
            lp[k] += h;
            lm[k] -= h;
            let fp = loss_and_grad(&lp, &loc, &t, m).0.total;
            let fm = loss_and_grad(&lm, &loc, &t, m).0.total;
            let fd = (fp - fm) / (2.0 * h);
            assert!((gl[k] - fd).abs() < 1e-7, "logit {k}: {} vs {fd}", gl[k]);
        }
        for k in 0..loc.len() {
            let mut lp = loc.clone();
            let mut lm = loc.clone();
            lp[k] += h;
            lm[k] -= h;
            let fp = loss_and_grad(&logits, &lp, &t, m).0.total;
            let fm = loss_and_grad(&logits, &lm, &t, m).0.total;
            let fd = (fp - fm) / (2.0 * h);
            assert!((gc[k] - fd).abs() < 1e-7, "loc {k}: {} vs {fd}", gc[k]);
        }
    }
}
