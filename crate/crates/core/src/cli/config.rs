use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::DEFAULT_TAU_MAX;
use crate::encoder::{default_alpha_grid, EncodingConfig, FoldSpec, DEFAULT_GUARD};
use crate::error::{Error, Result};
use crate::hierarchy::DEFAULT_ROI_THRESHOLD;
use crate::ingest::{default_lags, PlantedHierarchy};
use crate::mat::stats::DEFAULT_PERMUTATIONS;
use crate::pipeline::Params;
use crate::temporal::{DEFAULT_MAX_LAG_TOKENS, DEFAULT_MAX_LAG_TR};
use crate::toylm::{ToyLmConfig, DEFAULT_SIGMA, DEFAULT_TRIALS};

/// External inputs. Anything left unset is read from, or generated into,
/// the output directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Token-level features (HFM1 or CSV).
    pub features: Option<PathBuf>,
    pub timeline: Option<PathBuf>,
    pub bold: Option<PathBuf>,
    /// `voxel_id,roi_label` CSV.
    pub roi: Option<PathBuf>,
    /// Directory of `layer_XX.hfm` activations.
    pub activations: Option<PathBuf>,
    /// Directory of `*_dx.hfm` / `*_dy.hfm` / `*_meta.json` perturbation runs.
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Pca,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    In,
    Out,
    Time,
}

/// Network whose perturbations feed the causal stage when no runs are given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// The mixing network behind `synth` (layer 0 → 1).
    Planted,
    Toylm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: InputPaths,
    pub model: ModelKind,
    pub layer_src: usize,
    pub layer_tgt: usize,
    pub space: Space,
    pub pca_k: usize,
    pub fir_lags: Vec<usize>,
    pub folds: FoldSpec,
    pub alpha_grid: Vec<f64>,
    pub guard: usize,
    pub tau_max: usize,
    pub sigma: f64,
    pub n_trials: usize,
    pub max_lag_tr: usize,
    pub max_lag_tokens: usize,
    pub roi_threshold: f64,
    pub n_perm: usize,
    pub n_shuffles: usize,
    pub partition: PartitionKind,
    pub seed: u64,
    /// Planted generator; its `seed` is replaced by the run seed.
    pub synth: PlantedHierarchy,
    /// Toy LM; its `seed` is replaced by the run seed.
    pub toylm: ToyLmConfig,
    pub toylm_tokens: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: InputPaths::default(),
            model: ModelKind::Planted,
            layer_src: 0,
            layer_tgt: 1,
            space: Space::Pca,
            pca_k: 20,
            fir_lags: default_lags(),
            folds: FoldSpec::default(),
            alpha_grid: default_alpha_grid(),
            guard: DEFAULT_GUARD,
            tau_max: DEFAULT_TAU_MAX,
            sigma: DEFAULT_SIGMA,
            n_trials: DEFAULT_TRIALS,
            max_lag_tr: DEFAULT_MAX_LAG_TR,
            max_lag_tokens: DEFAULT_MAX_LAG_TOKENS,
            roi_threshold: DEFAULT_ROI_THRESHOLD,
            n_perm: DEFAULT_PERMUTATIONS,
            n_shuffles: 20,
            partition: PartitionKind::In,
            seed: 0,
            synth: PlantedHierarchy::default(),
            toylm: ToyLmConfig::default(),
            toylm_tokens: 128,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.pca_k == 0 {
            return bad("pca_k must be at least 1".into());
        }
        if self.fir_lags.is_empty() || self.fir_lags.contains(&0) {
            return bad("fir_lags must be a non-empty list of positive delays".into());
        }
        if self.layer_tgt < self.layer_src {
            return bad(format!(
                "layer_tgt {} is below layer_src {}",
                self.layer_tgt, self.layer_src
            ));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.max_lag_tr < 2 || self.max_lag_tokens < 2 {
            return bad("time-constant max lags must be at least 2".into());
        }
        if !self.roi_threshold.is_finite() {
            return bad("roi_threshold must be finite".into());
        }
        if self.n_shuffles < 2 {
            return bad("n_shuffles must be at least 2".into());
        }
        if self.toylm_tokens == 0 || self.toylm_tokens > self.toylm.max_seq {
            return bad(format!(
                "toylm_tokens must lie in 1..={}",
                self.toylm.max_seq
            ));
        }
        self.toylm.validate()?;
        self.encoding().validate()
    }

    pub fn encoding(&self) -> EncodingConfig {
        EncodingConfig {
            folds: self.folds.clone(),
            alpha_grid: self.alpha_grid.clone(),
            guard: self.guard,
        }
    }

    pub fn params(&self) -> Params {
        Params {
            lags: self.fir_lags.clone(),
            encoding: self.encoding(),
            tau_max: self.tau_max,
            sigma: self.sigma,
            n_trials: self.n_trials,
            max_lag_tr: self.max_lag_tr,
            max_lag_tokens: self.max_lag_tokens,
            roi_threshold: self.roi_threshold,
            n_perm: self.n_perm,
            seed: self.seed,
        }
    }

    pub fn planted(&self) -> PlantedHierarchy {
        PlantedHierarchy {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn toylm_config(&self) -> ToyLmConfig {
        ToyLmConfig {
            seed: self.seed,
            ..self.toylm.clone()
        }
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
