//! Local-likelihood nearest-neighbor entropy and mutual information estimators.

pub mod bias;
pub mod density;
pub mod entropy;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod mutual_info;
pub mod neighbors;
pub mod rng;
pub mod special;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use neighbors::{Metric, Neighbor, NeighborIndex, NeighborList, PointCloud};
