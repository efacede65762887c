//! Network parameters, seeded initialization, and the checkpoint container.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::Encoder;
use crate::error::{Error, Result};
use crate::io::{write_atomic, RunConfig};
use crate::rng::derive_rng;

use super::mlp::Mlp;

/// Per-iteration blocks: offset head (state -> 3), per-edge message MLP, and
/// the residual state update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationParams {
    pub offset: Mlp,
    pub edge: Mlp,
    pub update: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub embedding: Mlp,
    pub iterations: Vec<IterationParams>,
    pub trunk: Mlp,
    pub class_head: Mlp,
    pub loc_head: Mlp,
}

impl GnnParams {
    /// Seeded initialization: uniform weights scaled by 1/sqrt(fan_in), zero
    /// biases, and every update MLP's final layer zeroed so each iteration
    /// starts as the identity.
    pub fn init(cfg: &RunConfig) -> GnnParams {
        let mut rng = derive_rng(cfg.seed, "params/init");
        let enc = cfg.encoder_config();
        let state = cfg.state_width();
        let d_enc = enc.feature_len();
        let edge_in = enc.geo_len() + 1 + state;

        let embedding = Mlp::init(d_enc, &cfg.embedding_mlp, &mut rng);
        let mut iterations = Vec::with_capacity(cfg.iterations);
        for _ in 0..cfg.iterations {
            let offset_widths: Vec<usize> =
                cfg.offset_mlp_hidden.iter().copied().chain([3]).collect();
            let update_widths: Vec<usize> =
                cfg.update_mlp_hidden.iter().copied().chain([state]).collect();
            let offset = Mlp::init(state, &offset_widths, &mut rng);
            let edge = Mlp::init(edge_in, &cfg.edge_mlp, &mut rng);
            let mut update = Mlp::init(edge.out_dim(), &update_widths, &mut rng);
            update.zero_final_layer();
            iterations.push(IterationParams { offset, edge, update });
        }
        let trunk = Mlp::init(state, &cfg.trunk_mlp, &mut rng);
        let class_widths: Vec<usize> = cfg
            .class_head_hidden
            .iter()
            .copied()
            .chain([cfg.num_classes()])
            .collect();
        let class_head = Mlp::init(trunk.out_dim(), &class_widths, &mut rng);
        let loc_head = Mlp::init(trunk.out_dim(), &cfg.loc_head, &mut rng);
        GnnParams { embedding, iterations, trunk, class_head, loc_head }
    }

    pub fn zeros_like(&self) -> GnnParams {
        GnnParams {
            embedding: self.embedding.zeros_like(),
            iterations: self
                .iterations
                .iter()
                .map(|it| IterationParams {
                    offset: it.offset.zeros_like(),
                    edge: it.edge.zeros_like(),
                    update: it.update.zeros_like(),
                })
                .collect(),
            trunk: self.trunk.zeros_like(),
            class_head: self.class_head.zeros_like(),
            loc_head: self.loc_head.zeros_like(),
        }
    }

    pub fn state_width(&self) -> usize {
        self.embedding.out_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.class_head.out_dim()
    }

    pub fn num_iterations(&self) -> usize {
        self.iterations.len()
    }

    fn mlps(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.embedding];
        for it in &self.iterations {
            v.push(&it.offset);
            v.push(&it.edge);
            v.push(&it.update);
        }
        v.push(&self.trunk);
        v.push(&self.class_head);
        v.push(&self.loc_head);
        v
    }

    fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v = vec![&mut self.embedding];
        for it in &mut self.iterations {
            v.push(&mut it.offset);
            v.push(&mut it.edge);
            v.push(&mut it.update);
        }
        v.push(&mut self.trunk);
        v.push(&mut self.class_head);
        v.push(&mut self.loc_head);
        v
    }

    pub fn param_count(&self) -> usize {
        self.mlps().iter().map(|m| m.param_count()).sum()
    }

    /// Visit every parameter mutably, in flat order.
    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for m in self.mlps_mut() {
            m.for_each_param_mut(f);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in self.mlps() {
            m.for_each_param(&mut |v| out.push(v));
        }
        out
    }

    /// Add `delta` to the parameter at flat index `idx` (finite differences).
    pub fn nudge(&mut self, idx: usize, delta: f64) {
        let mut k = 0usize;
        for m in self.mlps_mut() {
            m.for_each_param_mut(&mut |v| {
                if k == idx {
                    *v += delta;
                }
                k += 1;
            });
        }
        assert!(idx < k, "flat index {idx} out of range {k}");
    }

    /// SGD step: `self -= lr * grads`.
    pub fn apply_gradients(&mut self, grads: &GnnParams, lr: f64) {
        let mut gs = Vec::new();
        grads.mlps().iter().for_each(|m| m.for_each_param(&mut |v| gs.push(v)));
        let mut k = 0usize;
        for m in self.mlps_mut() {
            m.for_each_param_mut(&mut |v| {
                *v -= lr * gs[k];
                k += 1;
            });
        }
    }

    /// Shape-compatibility against the dimensions implied by `cfg`.
    pub fn validate_dims(&self, cfg: &RunConfig) -> Result<()> {
        let expected = template(cfg);
        let ok = self.embedding.same_shape(&expected.embedding)
            && self.iterations.len() == expected.iterations.len()
            && self.iterations.iter().zip(&expected.iterations).all(|(a, b)| {
                a.offset.same_shape(&b.offset)
                    && a.edge.same_shape(&b.edge)
                    && a.update.same_shape(&b.update)
            })
            && self.trunk.same_shape(&expected.trunk)
            && self.class_head.same_shape(&expected.class_head)
            && self.loc_head.same_shape(&expected.loc_head);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "checkpoint weights do not match the configured architecture".into(),
            ))
        }
    }
}

fn template(cfg: &RunConfig) -> GnnParams {
    let enc: Encoder = cfg.encoder_config();
    let state = cfg.state_width();
    let edge_in = enc.geo_len() + 1 + state;
    let offset_widths: Vec<usize> = cfg.offset_mlp_hidden.iter().copied().chain([3]).collect();
    let update_widths: Vec<usize> = cfg.update_mlp_hidden.iter().copied().chain([state]).collect();
    let class_widths: Vec<usize> = cfg
        .class_head_hidden
        .iter()
        .copied()
        .chain([cfg.num_classes()])
        .collect();
    let edge = Mlp::zeros(edge_in, &cfg.edge_mlp);
    let trunk = Mlp::zeros(state, &cfg.trunk_mlp);
    GnnParams {
        embedding: Mlp::zeros(enc.feature_len(), &cfg.embedding_mlp),
        iterations: (0..cfg.iterations)
            .map(|_| IterationParams {
                offset: Mlp::zeros(state, &offset_widths),
                edge: edge.clone(),
                update: Mlp::zeros(edge.out_dim(), &update_widths),
            })
            .collect(),
        class_head: Mlp::zeros(trunk.out_dim(), &class_widths),
        loc_head: Mlp::zeros(trunk.out_dim(), &cfg.loc_head),
        trunk,
    }
}

/// Versioned checkpoint: config echo plus all weight arrays. JSON keeps f64
/// round-trips exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub params: GnnParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(config: RunConfig, params: GnnParams) -> Checkpoint {
        Checkpoint { version: CHECKPOINT_VERSION, config, params }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|source| Error::FileUnreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.config.validate()?;
        ckpt.params.validate_dims(&ckpt.config)?;
        Ok(ckpt)
    }
}
