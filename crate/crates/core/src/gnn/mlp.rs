//! Minimal dense MLP with hand-written reverse mode. ReLU follows every
//! layer except the last, which stays linear. Gradients accumulate into a
//! same-shaped `Mlp`, so one struct serves as both parameters and gradient
//! buffer.

use serde::{Deserialize, Serialize};

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// Row-major (out_dim x in_dim).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Linear {
        Linear { w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim], in_dim, out_dim }
    }

    /// Seeded uniform init scaled by 1/sqrt(fan_in); biases start at zero.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Linear {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-1.0..1.0) * scale)
            .collect();
        Linear { w, b: vec![0.0; out_dim], in_dim, out_dim }
    }

    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *out_v = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Post-activation values per layer; `acts[0]` is the input, `acts[L]` the
/// final linear output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// Build from an input width and successive layer output widths.
    pub fn zeros(in_dim: usize, widths: &[usize]) -> Mlp {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for &w in widths {
            layers.push(Linear::zeros(d, w));
            d = w;
        }
        Mlp { layers }
    }

    pub fn init<R: Rng>(in_dim: usize, widths: &[usize], rng: &mut R) -> Mlp {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for &w in widths {
            layers.push(Linear::init(d, w, rng));
            d = w;
        }
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    /// Zero the final layer (weights and bias). Update MLPs start this way so
    /// the residual iteration is the identity at initialization.
    pub fn zero_final_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.w.iter_mut().for_each(|v| *v = 0.0);
            last.b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            layer.apply(&cur, &mut out);
            if k < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            cur = out;
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            layer.apply(acts.last().expect("nonempty"), &mut out);
            if k < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        MlpCache { acts }
    }

    pub fn output<'c>(&self, cache: &'c MlpCache) -> &'c [f64] {
        cache.acts.last().expect("nonempty cache")
    }

    /// Backpropagate `grad_out` through the cached forward pass, accumulating
    /// parameter gradients into `grads` and returning the input gradient.
    /// ReLU uses subgradient 0 at 0.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        debug_assert_eq!(grad_out.len(), self.out_dim());
        let mut g = grad_out.to_vec();
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.acts[l];
            if l < last {
                // acts[l + 1] is post-ReLU output of this layer
                let post = &cache.acts[l + 1];
                for (gv, &p) in g.iter_mut().zip(post) {
                    if p <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let gl = &mut grads.layers[l];
            let mut g_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let go = g[o];
                gl.b[o] += go;
                let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                let grow = &mut gl.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    grow[i] += go * input[i];
                    g_in[i] += go * row[i];
                }
            }
            g = g_in;
        }
        g
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        for l in &self.layers {
            l.w.iter().for_each(|&v| f(v));
            l.b.iter().for_each(|&v| f(v));
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| f(v));
            l.b.iter_mut().for_each(|v| f(v));
        }
    }

    /// Elementwise accumulate another same-shaped MLP (gradient reduction).
    pub fn add_from(&mut self, other: &Mlp) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    /// Widths are equal (shape compatibility for grads/checkpoints).
    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }
}
