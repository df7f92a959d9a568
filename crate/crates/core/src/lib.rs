//! Encoding models, perturbation-based causal graphs between language-model
//! layers, and time-constant hierarchies for comparing language-model
//! features with fMRI responses.

pub mod causal;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod hierarchy;
pub mod ingest;
pub mod mat;
pub mod par;
pub mod pipeline;
pub mod temporal;
pub mod toylm;

pub use error::{Error, Result};
pub use mat::Matrix;
