use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
/// Rows at the head of each held-out block left unscored; matches the
/// deepest default FIR delay.
pub const DEFAULT_GUARD: usize = 9;

/// How the time axis is cut into outer folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FoldSpec {
    /// Equal contiguous blocks; the first `T mod n` blocks get one extra row.
    Contiguous { n_folds: usize },
    /// One block per story, in order; lengths must sum to `T`.
    Stories { lengths: Vec<usize> },
}

impl Default for FoldSpec {
    fn default() -> Self {
        FoldSpec::Contiguous {
            n_folds: DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLayout {
    pub spec: FoldSpec,
    /// Half-open `[start, end)` row ranges.
    pub blocks: Vec<(usize, usize)>,
    pub guard: usize,
}

impl FoldLayout {
    pub fn new(spec: &FoldSpec, n_rows: usize, guard: usize) -> Result<Self> {
        let lengths = match spec {
            FoldSpec::Contiguous { n_folds } => {
                let n = *n_folds;
                if n < 2 {
                    return Err(Error::config(format!("need at least 2 folds, got {n}")));
                }
                if n > n_rows {
                    return Err(Error::config(format!("{n} folds for {n_rows} rows")));
                }
                (0..n)
                    .map(|i| n_rows / n + usize::from(i < n_rows % n))
                    .collect::<Vec<_>>()
            }
            FoldSpec::Stories { lengths } => {
                if lengths.len() < 2 {
                    return Err(Error::config("need at least 2 stories"));
                }
                let total: usize = lengths.iter().sum();
                if total != n_rows {
                    return Err(Error::config(format!(
                        "story lengths sum to {total}, data has {n_rows} rows"
                    )));
                }
                lengths.clone()
            }
        };
        let mut blocks = Vec::with_capacity(lengths.len());
        let mut start = 0;
        for len in lengths {
            blocks.push((start, start + len));
            start += len;
        }
        Ok(FoldLayout {
            spec: spec.clone(),
            blocks,
            guard,
        })
    }

    pub fn n_folds(&self) -> usize {
        self.blocks.len()
    }

    pub fn rows(&self, fold: usize) -> std::ops::Range<usize> {
        let (a, b) = self.blocks[fold];
        a..b
    }

    /// Rows scored when `fold` is held out: the block minus its guard head
    /// and any masked rows. Fewer than 3 is a configuration error.
    pub fn scoring_rows(&self, fold: usize, mask: Option<&[bool]>) -> Result<Vec<usize>> {
        let (a, b) = self.blocks[fold];
        let rows: Vec<usize> = ((a + self.guard).min(b)..b)
            .filter(|&r| !mask.is_some_and(|m| m[r]))
            .collect();
        if rows.len() < 3 {
            return Err(Error::config(format!(
                "fold {fold} keeps {} scoring rows after the {}-row guard and mask; need 3",
                rows.len(),
                self.guard
            )));
        }
        Ok(rows)
    }

    /// All rows of the listed folds, in time order.
    pub fn rows_of(&self, folds: &[usize]) -> Vec<usize> {
        folds.iter().flat_map(|&f| self.rows(f)).collect()
    }
}
