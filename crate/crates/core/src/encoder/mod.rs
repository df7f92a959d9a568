//! Nested cross-validated ridge encoding of feature groups onto voxels,
//! accuracy and difference maps, and shuffle nulls.

pub mod fit;
pub mod folds;
pub mod maps;
pub mod null;

pub use fit::{default_alpha_grid, fit_encoding, fit_feature_group, EncodingConfig, RidgeResult};
pub use folds::{FoldLayout, FoldSpec, DEFAULT_FOLDS, DEFAULT_GUARD};
pub use maps::{accuracy_map, diff_map, roi_layer_profile, AccuracyMap, Provenance, RoiProfile};
pub use null::{shuffle_null, NullMode, NullStats};
