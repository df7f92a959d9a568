//! Dense-matrix primitives: the numeric substrate for every other module.

mod matrix;
pub mod pca;
pub mod ridge;
pub mod stats;

pub use matrix::Matrix;
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use ridge::{ridge_solve, RidgePath, RidgeWeights};
pub use stats::{fractional_ranks, pearson, spearman, Correlation, SpearmanResult};
