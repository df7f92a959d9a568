//! Principal component analysis via SVD of the centered data.

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Fitted PCA: column means, a `d × k` projection with orthonormal columns,
/// and per-component variance in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub projection: Matrix,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.projection.cols()
    }

    /// Zero-mean identity projection, for analyses done in the raw space.
    pub fn identity(d: usize) -> Self {
        PcaModel {
            mean: vec![0.0; d],
            projection: Matrix::identity(d),
            explained_variance: vec![0.0; d],
        }
    }

    /// Multiplies by the projection without centering.
    ///
    /// Perturbation differences are already mean-free, so they are mapped
    /// into component space with the bare projection.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x)?;
        x.matmul(&self.projection)
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(format!(
                "PCA fitted on {} columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel> {
    let (t, d) = x.shape();
    if t < 2 {
        return Err(Error::dim(format!("PCA needs at least 2 rows, got {t}")));
    }
    if k == 0 || k > t.min(d) {
        return Err(Error::dim(format!(
            "k = {k} outside 1..={} for a {t}x{d} matrix",
            t.min(d)
        )));
    }
    let mean = x.column_means();
    let mut centered = x.to_nalgebra();
    for (j, m) in mean.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-m);
    }

    let svd = SVD::new(centered, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Fit("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let denom = (t - 1) as f64;
    let mut projection = Matrix::zeros(d, k);
    let mut explained_variance = Vec::with_capacity(k);
    for (c, &src) in order.iter().take(k).enumerate() {
        let dir: Vec<f64> = (0..d).map(|j| v_t[(src, j)]).collect();
        let sign = sign_of_largest(&dir);
        for (j, v) in dir.iter().enumerate() {
            projection.set(j, c, sign * v);
        }
        let s = svd.singular_values[src];
        explained_variance.push((s * s / denom).max(0.0));
    }

    Ok(PcaModel {
        mean,
        projection,
        explained_variance,
    })
}

/// `(x − mean) · projection`.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    model.check_dim(x)?;
    let mut centered = x.clone();
    for r in 0..centered.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    centered.matmul(&model.projection)
}

/// +1 or −1 so that the largest-magnitude entry (first on ties) is positive.
fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).copied().unwrap_or(0.0) < 0.0 {
        -1.0
    } else {
        1.0
    }
}
