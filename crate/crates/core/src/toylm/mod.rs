//! Toy autoregressive transformer used to generate layer activations and to
//! propagate injected perturbations, plus import/export of perturbation runs.

pub mod model;
pub mod perturb;

pub use model::{toylm_init, Block, Embedding, ToyLm, ToyLmConfig, TransformerBlock};
pub use perturb::{
    export_perturbation_run, import_perturbation_run, import_run_dir, perturb_layers,
    perturbation_pair, perturbed_forward, PerturbationRun, RunMeta, DEFAULT_SIGMA, DEFAULT_TRIALS,
};
