use serde::{Deserialize, Serialize};

use super::folds::{FoldLayout, FoldSpec, DEFAULT_GUARD};
use crate::error::{Error, Result};
use crate::ingest::{fir_expand, BoldMatrix};
use crate::mat::stats::pearson_unchecked;
use crate::mat::{Matrix, RidgePath};
use crate::par;

/// `10^-1, 10^0, …, 10^8`.
pub fn default_alpha_grid() -> Vec<f64> {
    (-1..=8).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub folds: FoldSpec,
    pub alpha_grid: Vec<f64>,
    pub guard: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            folds: FoldSpec::default(),
            alpha_grid: default_alpha_grid(),
            guard: DEFAULT_GUARD,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::config("alpha grid is empty"));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(Error::config(format!("alpha {a} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Nested cross-validated ridge fit of one design onto every voxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeResult {
    pub voxel_ids: Vec<String>,
    pub layout: FoldLayout,
    pub alpha_grid: Vec<f64>,
    /// Alpha chosen by the inner loop, `n_folds × l`.
    pub fold_alphas: Matrix,
    /// Held-out correlation, `n_folds × l`.
    pub fold_accuracy: Matrix,
    pub mean_accuracy: Vec<f64>,
    /// Most frequently chosen alpha per voxel (smallest on ties).
    pub alpha: Vec<f64>,
    /// `d_eff × l` weights refit on all rows at `alpha`.
    pub weights: Matrix,
}

impl RidgeResult {
    pub fn n_voxels(&self) -> usize {
        self.voxel_ids.len()
    }
}

/// A training set, centered on its own means, and one validation set.
struct Split {
    path: RidgePath,
    val_rot: Matrix,
    val_y: Matrix,
}

fn centered(m: &Matrix, rows: &[usize], means: &[f64]) -> Matrix {
    let mut out = m.select_rows(rows);
    for r in 0..out.rows() {
        for (v, mu) in out.row_mut(r).iter_mut().zip(means) {
            *v -= mu;
        }
    }
    out
}

impl Split {
    fn new(x: &Matrix, y: &Matrix, fit_rows: &[usize], val_rows: &[usize]) -> Result<Self> {
        let x_fit = x.select_rows(fit_rows);
        let y_fit = y.select_rows(fit_rows);
        let x_mean = x_fit.column_means();
        let y_mean = y_fit.column_means();
        let path = RidgePath::new(
            &centered(x, fit_rows, &x_mean),
            &centered(y, fit_rows, &y_mean),
        )?;
        let val_rot = path.rotate_design(&centered(x, val_rows, &x_mean))?;
        Ok(Split {
            path,
            val_rot,
            val_y: y.select_rows(val_rows),
        })
    }

    fn score(&self, voxel: usize, alpha: f64, target: &[f64]) -> Result<f64> {
        let z = self.path.rotated_weights(voxel, alpha)?;
        let pred: Vec<f64> = (0..self.val_rot.rows())
            .map(|r| self.val_rot.row(r).iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect();
        Ok(pearson_unchecked(&pred, target).value)
    }

    /// `l × n_alpha` validation correlations.
    fn score_grid(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        par::try_map_indexed(self.val_y.cols(), |v| {
            let target = self.val_y.column(v);
            grid.iter().map(|&a| self.score(v, a, &target)).collect()
        })
    }

    fn score_chosen(&self, alphas: &[f64]) -> Result<Vec<f64>> {
        par::try_map_indexed(self.val_y.cols(), |v| {
            self.score(v, alphas[v], &self.val_y.column(v))
        })
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Nested cross-validated ridge encoding of `x` onto every voxel of `bold`.
///
/// Each outer block is held out once. Within the remaining blocks, alpha is
/// chosen per voxel by leave-one-block-out, maximizing the mean validation
/// correlation; the model is then refit on all training blocks and scored
/// on the held-out block. Means are taken from training rows only. `mask`
/// marks rows (empty TRs) excluded from every score.
pub fn fit_encoding(
    x: &Matrix,
    bold: &BoldMatrix,
    cfg: &EncodingConfig,
    mask: Option<&[bool]>,
) -> Result<RidgeResult> {
    cfg.validate()?;
    let y = &bold.data;
    let (t, l) = y.shape();
    if x.rows() != t {
        return Err(Error::dim(format!("features have {} rows, BOLD has {t}", x.rows())));
    }
    if let Some(m) = mask {
        if m.len() != t {
            return Err(Error::dim(format!("mask has {} rows, BOLD has {t}", m.len())));
        }
    }
    let layout = FoldLayout::new(&cfg.folds, t, cfg.guard)?;
    let k = layout.n_folds();
    let scoring: Vec<Vec<usize>> = (0..k)
        .map(|f| layout.scoring_rows(f, mask))
        .collect::<Result<_>>()?;
    let grid = &cfg.alpha_grid;

    let mut fold_alphas = Matrix::zeros(k, l);
    let mut fold_accuracy = Matrix::zeros(k, l);
    for outer in 0..k {
        let train: Vec<usize> = (0..k).filter(|&f| f != outer).collect();
        let mut inner_sum = vec![vec![0.0; grid.len()]; l];
        for &inner in &train {
            let fit: Vec<usize> = train.iter().copied().filter(|&f| f != inner).collect();
            let split = Split::new(x, y, &layout.rows_of(&fit), &scoring[inner])?;
            for (acc, s) in inner_sum.iter_mut().zip(split.score_grid(grid)?) {
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
        }
        let chosen: Vec<f64> = inner_sum.iter().map(|s| grid[argmax_first(s)]).collect();
        let split = Split::new(x, y, &layout.rows_of(&train), &scoring[outer])?;
        let acc = split.score_chosen(&chosen)?;
        for v in 0..l {
            fold_alphas.set(outer, v, chosen[v]);
            fold_accuracy.set(outer, v, acc[v]);
        }
    }

    let mean_accuracy: Vec<f64> = (0..l)
        .map(|v| (0..k).map(|f| fold_accuracy.get(f, v)).sum::<f64>() / k as f64)
        .collect();
    let alpha: Vec<f64> = (0..l)
        .map(|v| {
            let counts: Vec<f64> = grid
                .iter()
                .map(|a| (0..k).filter(|&f| fold_alphas.get(f, v) == *a).count() as f64)
                .collect();
            grid[argmax_first(&counts)]
        })
        .collect();

    let all: Vec<usize> = (0..t).collect();
    let full = RidgePath::new(
        &centered(x, &all, &x.column_means()),
        &centered(y, &all, &y.column_means()),
    )?;
    let cols = par::try_map_indexed(l, |v| full.weights(v, alpha[v]))?;
    let weights = Matrix::from_columns(&cols)?;

    Ok(RidgeResult {
        voxel_ids: bold.voxel_ids.clone(),
        layout,
        alpha_grid: grid.clone(),
        fold_alphas,
        fold_accuracy,
        mean_accuracy,
        alpha,
        weights,
    })
}

/// Selects `columns` of pre-FIR features, FIR-expands them and fits.
pub fn fit_feature_group(
    features: &Matrix,
    columns: &[usize],
    lags: &[usize],
    bold: &BoldMatrix,
    cfg: &EncodingConfig,
    mask: Option<&[bool]>,
) -> Result<RidgeResult> {
    if columns.is_empty() {
        return Err(Error::config("feature group has no columns"));
    }
    let x = fir_expand(&features.select_columns(columns)?, lags)?;
    fit_encoding(&x, bold, cfg, mask)
}
