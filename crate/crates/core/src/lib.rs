//! Mapping, cycle-level simulation and cost analysis for virtually
//! upscaled systolic arrays (VUSA).
//!
//! A VUSA has `N` rows of `M` data-flow elements (SPEs) but only `A`
//! multiply-accumulate units per row. When a window of the weight matrix
//! has at most `A` nonzeros in every row, the MACs are routed to those
//! positions and the array behaves like a full `N x M` systolic array.

pub mod analytics;
pub mod config;
pub mod dataflow;
pub mod efficiency;
pub mod error;
pub mod mapper;
pub mod matrix;
pub mod seed;
pub mod timing;
pub mod workload;

pub use config::{validate_config, ArrayConfig};
pub use efficiency::{CostCoefficients, RunReport};
pub use error::{Error, Result};
pub use mapper::{RowAssignment, TileRef, WindowAssignment};
pub use matrix::{dense_matmul, Matrix, WeightMatrix};
pub use timing::{LoadSplit, TileCost, Weighting};
pub use workload::{GemmWorkload, LayerSpec, Pattern};
