//! Noise injection at a source layer and the resulting target-layer response.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::ToyLm;
use crate::error::{Error, Result};
use crate::ingest::hfm;
use crate::mat::Matrix;
use crate::par;

pub const DEFAULT_SIGMA: f64 = 0.01;
pub const DEFAULT_TRIALS: usize = 8;

/// One trial: injected `dx` at the source layer and the response `dy`
/// at the target layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRun {
    pub dx: Matrix,
    pub dy: Matrix,
    pub meta: RunMeta,
}

/// Sidecar metadata written next to each dX/dY pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub source_layer: usize,
    pub target_layer: usize,
    pub sigma: f64,
    pub trial: usize,
    #[serde(default)]
    pub trial_seed: Option<u64>,
}

impl PerturbationRun {
    pub fn new(dx: Matrix, dy: Matrix, meta: RunMeta) -> Result<Self> {
        if dx.rows() != dy.rows() {
            return Err(Error::format(
                4,
                format!("dX has {} rows but dY has {}", dx.rows(), dy.rows()),
            ));
        }
        Ok(PerturbationRun { dx, dy, meta })
    }

    pub fn len(&self) -> usize {
        self.dx.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.rows() == 0
    }
}

/// Gaussian noise with per-entry standard deviation `sigma · RMS(activation)`.
fn draw_noise(activation: &Matrix, sigma: f64, seed: u64) -> Result<Matrix> {
    let sd = sigma * activation.rms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(activation.rows(), activation.cols(), |_, _| {
        sd * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Perturbs layer `source` of precomputed clean activations and returns the
/// response at every layer in `targets` for each trial, trial-major.
///
/// Trial `i` uses seed `seed + i`, so results are independent of how trials
/// are scheduled across threads. A target equal to the source yields
/// `dy == dx`; targets below the source are rejected.
pub fn perturb_layers(
    model: &ToyLm,
    clean: &[Matrix],
    source: usize,
    targets: &[usize],
    sigma: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<PerturbationRun>> {
    let n_layers = model.n_layers();
    if clean.len() != n_layers + 1 {
        return Err(Error::dim(format!(
            "{} activation layers for a {n_layers}-layer model",
            clean.len()
        )));
    }
    if source >= n_layers {
        return Err(Error::range(format!(
            "source layer {source} must be below the top layer {n_layers}"
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t < source || t > n_layers) {
        return Err(Error::range(format!(
            "target layer {t} outside {source}..={n_layers}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("sigma must be >= 0, got {sigma}")));
    }

    let per_trial = par::try_map_indexed(n_trials, |trial| -> Result<Vec<PerturbationRun>> {
        let trial_seed = seed.wrapping_add(trial as u64);
        let dx = draw_noise(&clean[source], sigma, trial_seed)?;
        let perturbed_src = clean[source].add(&dx)?;
        let downstream = model.run_from(source, &perturbed_src)?;
        targets
            .iter()
            .map(|&tgt| {
                let dy = if tgt == source {
                    dx.clone()
                } else {
                    downstream[tgt - source - 1].sub(&clean[tgt])?
                };
                PerturbationRun::new(
                    dx.clone(),
                    dy,
                    RunMeta {
                        source_layer: source,
                        target_layer: tgt,
                        sigma,
                        trial,
                        trial_seed: Some(trial_seed),
                    },
                )
            })
            .collect()
    })?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Runs for every target layer above `source`, for `n_trials` trials.
pub fn perturbed_forward(
    model: &ToyLm,
    tokens: &[usize],
    source: usize,
    sigma: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<PerturbationRun>> {
    let clean = model.forward(tokens)?;
    let targets: Vec<usize> = (source + 1..=model.n_layers()).collect();
    perturb_layers(model, &clean, source, &targets, sigma, n_trials, seed)
}

/// Runs for a single `(source, target)` pair.
pub fn perturbation_pair(
    model: &ToyLm,
    tokens: &[usize],
    source: usize,
    target: usize,
    sigma: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<PerturbationRun>> {
    let clean = model.forward(tokens)?;
    perturb_layers(model, &clean, source, &[target], sigma, n_trials, seed)
}

pub fn import_perturbation_run(
    dx_path: impl AsRef<Path>,
    dy_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
) -> Result<PerturbationRun> {
    let dx = hfm::load_matrix(dx_path)?;
    let dy = hfm::load_matrix(dy_path)?;
    let meta_path = meta_path.as_ref();
    let text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: RunMeta = serde_json::from_str(&text)?;
    PerturbationRun::new(dx, dy, meta)
}

/// Writes `{stem}_dx.hfm`, `{stem}_dy.hfm` and `{stem}_meta.json` into `dir`.
pub fn export_perturbation_run(run: &PerturbationRun, dir: &Path, stem: &str) -> Result<()> {
    hfm::store_matrix(&run.dx, dir.join(format!("{stem}_dx.hfm")))?;
    hfm::store_matrix(&run.dy, dir.join(format!("{stem}_dy.hfm")))?;
    let meta = dir.join(format!("{stem}_meta.json"));
    std::fs::write(&meta, serde_json::to_string_pretty(&run.meta)?).map_err(|e| Error::io(&meta, e))
}

/// Loads every `*_meta.json` run in `dir`, sorted by file name.
pub fn import_run_dir(dir: &Path) -> Result<Vec<PerturbationRun>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|n| n.strip_suffix("_meta.json").map(str::to_owned))
        .collect();
    stems.sort();
    stems
        .iter()
        .map(|s| {
            import_perturbation_run(
                dir.join(format!("{s}_dx.hfm")),
                dir.join(format!("{s}_dy.hfm")),
                dir.join(format!("{s}_meta.json")),
            )
        })
        .collect()
}
