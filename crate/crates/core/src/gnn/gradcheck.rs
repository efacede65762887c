//! Central-finite-difference verification of the analytic backward pass.

use crate::encoding::Encoder;
use crate::error::Result;
use crate::graph::Graph;
use crate::types::PointCloud;

use super::forward::{backward, forward_cached};
use super::loss::loss_and_grad;
use super::params::GnnParams;
use super::targets::FrameTargets;

/// One training instance small enough for O(P) full forward evaluations.
pub struct ToyInstance {
    pub graph: Graph,
    pub cloud: PointCloud,
    pub encoder: Encoder,
    pub pool_radius: f64,
    pub targets: FrameTargets,
}

pub fn loss_value(params: &GnnParams, inst: &ToyInstance) -> Result<f64> {
    let cache = forward_cached(
        &inst.graph,
        &inst.cloud,
        inst.encoder,
        inst.pool_radius,
        params,
    )?;
    let (l, _, _) = loss_and_grad(
        &cache.output.class_logits,
        &cache.output.loc,
        &inst.targets,
        cache.output.num_classes,
    );
    Ok(l.total)
}

/// Full analytic gradient, flattened in parameter order.
pub fn analytic_gradient(params: &GnnParams, inst: &ToyInstance) -> Result<Vec<f64>> {
    let cache = forward_cached(
        &inst.graph,
        &inst.cloud,
        inst.encoder,
        inst.pool_radius,
        params,
    )?;
    let (_, g_logits, g_loc) = loss_and_grad(
        &cache.output.class_logits,
        &cache.output.loc,
        &inst.targets,
        cache.output.num_classes,
    );
    let mut grads = params.zeros_like();
    backward(
        &inst.graph,
        &inst.cloud,
        inst.encoder,
        params,
        &cache,
        &g_logits,
        &g_loc,
        &mut grads,
    )?;
    Ok(grads.flatten())
}

/// Central differences (L(p + h e_k) - L(p - h e_k)) / 2h over every
/// parameter.
pub fn numeric_gradient(params: &GnnParams, inst: &ToyInstance, h: f64) -> Result<Vec<f64>> {
    let n = params.param_count();
    let mut out = Vec::with_capacity(n);
    let mut work = params.clone();
    for k in 0..n {
        work.nudge(k, h);
        let fp = loss_value(&work, inst)?;
        work.nudge(k, -2.0 * h);
        let fm = loss_value(&work, inst)?;
        work.nudge(k, h);
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Worst relative disagreement. Central differences with h = 1e-5 on an O(1)
/// loss carry ~1e-10 absolute noise (rounding eps*|L|/h plus h^2 truncation),
/// so entries agreeing within 1e-9 absolute count as exact; everything else
/// is compared relative to the larger magnitude.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            if (a - n).abs() <= 1e-9 {
                0.0
            } else {
                (a - n).abs() / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// Max relative error between the analytic and finite-difference gradients.
pub fn gradient_check(params: &GnnParams, inst: &ToyInstance, h: f64) -> Result<f64> {
    let a = analytic_gradient(params, inst)?;
    let n = numeric_gradient(params, inst, h)?;
    Ok(max_relative_error(&a, &n))
}

/// Restricted check over a parameter subset; an empty subset is vacuously 0.
pub fn gradient_check_subset(
    params: &GnnParams,
    inst: &ToyInstance,
    h: f64,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let a = analytic_gradient(params, inst)?;
    let mut work = params.clone();
    let mut worst = 0.0f64;
    for &k in indices {
        work.nudge(k, h);
        let fp = loss_value(&work, inst)?;
        work.nudge(k, -2.0 * h);
        let fm = loss_value(&work, inst)?;
        work.nudge(k, h);
        let n = (fp - fm) / (2.0 * h);
        worst = worst.max(max_relative_error(&[a[k]], &[n]));
    }
    Ok(worst)
}
