use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{fit_encoding, EncodingConfig};
use crate::error::{Error, Result};
use crate::ingest::{fir_expand, BoldMatrix};
use crate::mat::Matrix;

/// Null standard deviations reported at full data scale, kept as metadata.
pub const REFERENCE_NULL_STD_SINGLE: f64 = 0.003;
pub const REFERENCE_NULL_STD_DIFFERENCE: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullMode {
    Single,
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullStats {
    pub mode: NullMode,
    pub mean: f64,
    /// Sample standard deviation over shuffles.
    pub std: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
    pub reference_std: f64,
}

/// Rows of `m` in the order given by `perm`.
fn permuted(m: &Matrix, perm: &[usize]) -> Matrix {
    m.select_rows(perm)
}

/// Empirical null from time-shuffled features.
///
/// `groups` holds pre-FIR feature matrices: one for a single-map null (mean
/// voxel accuracy per shuffle), two for a difference null (mean of the
/// first map minus the second). Shuffle `i` permutes rows with seed
/// `seed + i`, the same permutation for every group, then FIR-expands.
pub fn shuffle_null(
    groups: &[Matrix],
    lags: &[usize],
    bold: &BoldMatrix,
    cfg: &EncodingConfig,
    mask: Option<&[bool]>,
    n_shuffles: usize,
    seed: u64,
) -> Result<NullStats> {
    let mode = match groups.len() {
        1 => NullMode::Single,
        2 => NullMode::Difference,
        n => return Err(Error::config(format!("null needs 1 or 2 feature groups, got {n}"))),
    };
    if n_shuffles < 2 {
        return Err(Error::config(format!("need at least 2 shuffles, got {n_shuffles}")));
    }
    let t = bold.n_tr();
    if let Some(g) = groups.iter().find(|g| g.rows() != t) {
        return Err(Error::dim(format!("features have {} rows, BOLD has {t}", g.rows())));
    }

    // Shuffles run in order; each fit is parallel over voxels internally.
    let mut samples = Vec::with_capacity(n_shuffles);
    for i in 0..n_shuffles {
        let mut perm: Vec<usize> = (0..t).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64)));
        let mut means = Vec::with_capacity(groups.len());
        for g in groups {
            let x = fir_expand(&permuted(g, &perm), lags)?;
            let r = fit_encoding(&x, bold, cfg, mask)?;
            means.push(r.mean_accuracy.iter().sum::<f64>() / r.n_voxels() as f64);
        }
        samples.push(match mode {
            NullMode::Single => means[0],
            NullMode::Difference => means[0] - means[1],
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(NullStats {
        mode,
        mean,
        std,
        samples,
        seed,
        reference_std: match mode {
            NullMode::Single => REFERENCE_NULL_STD_SINGLE,
            NullMode::Difference => REFERENCE_NULL_STD_DIFFERENCE,
        },
    })
}
