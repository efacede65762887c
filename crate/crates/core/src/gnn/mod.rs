//! The detection network: pointset pooling, residual message-passing
//! iterations with alignment offsets, prediction heads, loss, SGD training,
//! and a finite-difference gradient checker.

pub mod gradcheck;
mod loss;
mod mlp;
mod params;
pub mod targets;
mod train;

mod forward;

pub use forward::{
    backward, forward, forward_cached, gnn_iteration, gnn_iteration_cached, pointset_pool,
    pointset_pool_cached, ForwardCache, ForwardOutput, IterCache, PoolCache,
};
pub use loss::{loss_and_grad, LossBreakdown};
pub use mlp::{Linear, Mlp, MlpCache};
pub use params::{Checkpoint, GnnParams, IterationParams, CHECKPOINT_VERSION};
pub use targets::{assign_targets, FrameTargets};
pub use train::{
    log_csv, prepare_frame, staircase_lr, train, train_with_hook, PreparedFrame, TrainFrame,
    TrainLogRow, TrainOutcome,
};
