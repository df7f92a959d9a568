use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{Matrix, PcaModel};
use crate::par;
use crate::toylm::PerturbationRun;

pub const DEFAULT_TAU_MAX: usize = 10;

/// Time-shifted causality matrices between a source and a target layer.
///
/// Rows index source dimensions and columns index target dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityResult {
    /// Trial-averaged signed `C_τ` for `τ = 0..=tau_max`.
    pub per_tau: Vec<Matrix>,
    /// `Σ_τ mean_trials |C_τ|`.
    pub aggregate: Matrix,
    pub tau_max: usize,
    pub n_trials: usize,
}

impl CausalityResult {
    pub fn n_source(&self) -> usize {
        self.aggregate.rows()
    }

    pub fn n_target(&self) -> usize {
        self.aggregate.cols()
    }
}

/// Lagged cross-covariance `C_τ[i, j] = Σ_t dX̄[t−τ, i]·dȲ[t, j] / (T−τ)`.
fn lagged_cross(dxb: &Matrix, dyb: &Matrix, tau: usize) -> Result<Matrix> {
    let t = dxb.rows();
    let src: Vec<usize> = (0..t - tau).collect();
    let tgt: Vec<usize> = (tau..t).collect();
    let c = dxb.select_rows(&src).t_matmul(&dyb.select_rows(&tgt))?;
    Ok(c.scale(1.0 / (t - tau) as f64))
}

/// Builds `C_τ` for every trial, averages signed and absolute matrices
/// across trials in run order, and sums the absolute ones over `τ`.
///
/// `source_pca` and `target_pca` project dX and dY without centering; pass
/// [`PcaModel::identity`] to stay in the raw activation space.
pub fn causality_matrix(
    runs: &[PerturbationRun],
    source_pca: &PcaModel,
    target_pca: &PcaModel,
    tau_max: usize,
) -> Result<CausalityResult> {
    if runs.is_empty() {
        return Err(Error::config("no perturbation runs"));
    }
    for (i, r) in runs.iter().enumerate() {
        if tau_max >= r.len() {
            return Err(Error::range(format!(
                "tau_max {tau_max} must be below the {} rows of run {i}",
                r.len()
            )));
        }
    }

    let per_run = par::try_map_indexed(runs.len(), |i| -> Result<Vec<Matrix>> {
        let dxb = source_pca.project(&runs[i].dx)?;
        let dyb = target_pca.project(&runs[i].dy)?;
        (0..=tau_max).map(|tau| lagged_cross(&dxb, &dyb, tau)).collect()
    })?;

    let n = runs.len() as f64;
    let (ds, dt) = per_run[0][0].shape();
    let mut per_tau = Vec::with_capacity(tau_max + 1);
    let mut aggregate = Matrix::zeros(ds, dt);
    for tau in 0..=tau_max {
        let mut signed = Matrix::zeros(ds, dt);
        let mut abs = Matrix::zeros(ds, dt);
        for run in &per_run {
            let c = &run[tau];
            for i in 0..ds {
                for j in 0..dt {
                    signed.set(i, j, signed.get(i, j) + c.get(i, j) / n);
                    abs.set(i, j, abs.get(i, j) + c.get(i, j).abs() / n);
                }
            }
        }
        aggregate = aggregate.add(&abs)?;
        per_tau.push(signed);
    }
    Ok(CausalityResult {
        per_tau,
        aggregate,
        tau_max,
        n_trials: runs.len(),
    })
}
