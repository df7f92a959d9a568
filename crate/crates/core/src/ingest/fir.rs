//! Finite-impulse-response delay expansion.

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Delays of 3 through 9 TRs into the past.
pub fn default_lags() -> Vec<usize> {
    (3..=9).collect()
}

/// Concatenates copies of `x` shifted down by each lag, zero-padded at the
/// top. Output columns are lag-major: block `b` holds all features at
/// `lags[b]`.
pub fn fir_expand(x: &Matrix, lags: &[usize]) -> Result<Matrix> {
    if lags.is_empty() {
        return Err(Error::config("FIR lag list is empty"));
    }
    if lags.contains(&0) {
        return Err(Error::config("FIR lags must be positive"));
    }
    let (t, k) = x.shape();
    let max_lag = *lags.iter().max().unwrap();
    if max_lag >= t {
        return Err(Error::config(format!(
            "max lag {max_lag} needs more than {t} rows"
        )));
    }
    let width = k * lags.len();
    let mut out = Matrix::zeros(t, width);
    for row in 0..t {
        let dst = out.row_mut(row);
        for (b, &lag) in lags.iter().enumerate() {
            if row >= lag {
                dst[b * k..(b + 1) * k].copy_from_slice(x.row(row - lag));
            }
        }
    }
    Ok(out)
}
