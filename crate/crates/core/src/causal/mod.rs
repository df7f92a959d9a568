//! Perturbation-based causality between layers, thresholded graphs and
//! low/high integration partitions.

pub mod graph;
pub mod matrix;
pub mod partition;

pub use graph::{graph_from_aggregate, median, threshold_graph, CausalGraph, DegreeSummary};
pub use matrix::{causality_matrix, CausalityResult, DEFAULT_TAU_MAX};
pub use partition::{
    degree_partition, timeconstant_partition, Criterion, Direction, FeaturePartition, Level,
};
