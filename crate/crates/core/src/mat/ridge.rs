//! Closed-form ridge regression.

use nalgebra::{Cholesky, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeWeights {
    pub weights: Vec<f64>,
    pub alpha: f64,
}

/// Solves `(XᵀX + αI) v = Xᵀw` by Cholesky factorization.
pub fn ridge_solve(x: &Matrix, w: &[f64], alpha: f64) -> Result<RidgeWeights> {
    let (t, d) = x.shape();
    if w.len() != t {
        return Err(Error::dim(format!("design has {t} rows, target has {}", w.len())));
    }
    if d == 0 {
        return Err(Error::dim("design has no columns"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let w_m = Matrix::new(t, 1, w.to_vec())?;
    let mut gram = x.t_matmul(x)?.to_nalgebra();
    let xtw = x.t_matmul(&w_m)?;
    for i in 0..d {
        gram[(i, i)] += alpha;
    }
    let max_diag = (0..d).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::Singular(format!("XᵀX + {alpha}·I is not positive definite"))
    })?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= max_diag * 1e-13 {
        return Err(Error::Singular(format!(
            "XᵀX + {alpha}·I is numerically singular (pivot {min_pivot:e})"
        )));
    }
    let sol = chol.solve(&DVector::from_column_slice(xtw.values()));
    Ok(RidgeWeights {
        weights: sol.iter().copied().collect(),
        alpha,
    })
}

/// Ridge solutions for many targets and many penalties sharing one design.
///
/// Diagonalizes `XᵀX = Q diag(s) Qᵀ` once; every `(target, alpha)` solution
/// is then `Q diag(1/(s+α)) QᵀXᵀw`.
#[derive(Debug, Clone)]
pub struct RidgePath {
    basis: Matrix,
    eigenvalues: Vec<f64>,
    /// Smallest usable `s + α`, relative to the largest eigenvalue.
    tolerance: f64,
    /// `QᵀXᵀY`, one column per target.
    rotated_xty: Matrix,
}

impl RidgePath {
    pub fn new(x: &Matrix, y: &Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dim(format!(
                "design has {} rows, targets have {}",
                x.rows(),
                y.rows()
            )));
        }
        let gram = x.t_matmul(x)?.to_nalgebra();
        let eig = SymmetricEigen::new(gram);
        let basis = Matrix::from_nalgebra(&eig.eigenvectors)?;
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let tolerance = eigenvalues.iter().copied().fold(0.0, f64::max) * 1e-13;
        let rotated_xty = basis.t_matmul(&x.t_matmul(y)?)?;
        Ok(RidgePath {
            basis,
            eigenvalues,
            tolerance,
            rotated_xty,
        })
    }

    pub fn n_features(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_targets(&self) -> usize {
        self.rotated_xty.cols()
    }

    /// Coordinates of target `j`'s solution in the eigenbasis.
    pub fn rotated_weights(&self, target: usize, alpha: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_features());
        for (i, s) in self.eigenvalues.iter().enumerate() {
            let denom = s + alpha;
            if !(denom > self.tolerance) {
                return Err(Error::Singular(format!(
                    "eigenvalue {s:e} with alpha {alpha} leaves the system singular"
                )));
            }
            out.push(self.rotated_xty.get(i, target) / denom);
        }
        Ok(out)
    }

    pub fn weights(&self, target: usize, alpha: f64) -> Result<Vec<f64>> {
        let z = self.rotated_weights(target, alpha)?;
        let d = self.n_features();
        Ok((0..d)
            .map(|i| self.basis.row(i).iter().zip(&z).map(|(q, z)| q * z).sum())
            .collect())
    }

    /// Rotates a design into the eigenbasis so predictions become `X Q · z`.
    pub fn rotate_design(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.basis)
    }
}
