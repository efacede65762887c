//! 3D object detection on raw LiDAR point clouds with a graph neural network
//! and interchangeable geometric pair-feature encoders.
//!
//! Pipeline: voxel downsampling, radius-graph construction over the vertices,
//! per-pair feature encoding (five variants, including rotation-invariant
//! angle features), pointset pooling, residual message passing with
//! alignment offsets, 7-DoF box decoding with merging, KITTI-style mAP
//! evaluation, and a per-stage timing benchmark.

pub mod bench;
pub mod detection;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod synthetic;
pub mod types;

pub use error::{Error, ExitClass, Result};
pub use types::{
    Box7DoF, Category, CategorySet, Difficulty, GroundTruthBox, LabelCategory, Point, PointCloud,
};

pub use encoding::{Encoder, EncoderKind};
pub use graph::Graph;
pub use io::RunConfig;
