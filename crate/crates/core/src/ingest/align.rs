//! Token timelines and token-to-TR averaging.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;

pub const DEFAULT_TR_SECONDS: f64 = 1.5;

/// Onset time of every token plus the scanner TR, both in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTimeline {
    pub tr_seconds: f64,
    pub token_times: Vec<f64>,
}

impl TokenTimeline {
    pub fn new(token_times: Vec<f64>, tr_seconds: f64) -> Result<Self> {
        let tl = TokenTimeline {
            tr_seconds,
            token_times,
        };
        tl.validate()?;
        Ok(tl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tr_seconds > 0.0) || !self.tr_seconds.is_finite() {
            return Err(Error::config(format!(
                "tr_seconds must be positive, got {}",
                self.tr_seconds
            )));
        }
        if let Some(i) = self.token_times.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::config(format!("token {i} has an invalid time")));
        }
        if let Some(i) = self.token_times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::config(format!(
                "token times decrease between tokens {i} and {}",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.token_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_times.is_empty()
    }

    /// TR index of a time; a token exactly on a boundary belongs to the later TR.
    pub fn tr_index(&self, t: f64) -> usize {
        (t / self.tr_seconds).floor() as usize
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tl: TokenTimeline = serde_json::from_str(&text)?;
        tl.validate()?;
        Ok(tl)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFeatures {
    pub features: Matrix,
    /// `true` where a TR received no tokens; that row is all zeros.
    pub empty_mask: Vec<bool>,
    pub tokens_per_tr: Vec<usize>,
}

pub fn align_tokens_to_tr(
    features: &Matrix,
    timeline: &TokenTimeline,
    n_tr: usize,
) -> Result<AlignedFeatures> {
    timeline.validate()?;
    if features.rows() != timeline.len() {
        return Err(Error::dim(format!(
            "{} feature rows for {} tokens",
            features.rows(),
            timeline.len()
        )));
    }
    let d = features.cols();
    let mut sums = vec![0.0; n_tr * d];
    let mut counts = vec![0usize; n_tr];
    for (tok, &t) in timeline.token_times.iter().enumerate() {
        let tr = timeline.tr_index(t);
        if tr >= n_tr {
            return Err(Error::range(format!(
                "token {tok} at {t} s falls past the last TR ({n_tr} TRs of {} s)",
                timeline.tr_seconds
            )));
        }
        counts[tr] += 1;
        for (s, v) in sums[tr * d..(tr + 1) * d].iter_mut().zip(features.row(tok)) {
            *s += v;
        }
    }
    for (tr, &c) in counts.iter().enumerate() {
        if c > 0 {
            sums[tr * d..(tr + 1) * d]
                .iter_mut()
                .for_each(|s| *s /= c as f64);
        }
    }
    Ok(AlignedFeatures {
        features: Matrix::new(n_tr, d, sums)?,
        empty_mask: counts.iter().map(|&c| c == 0).collect(),
        tokens_per_tr: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_token_mean_and_empty_bin() {
        let feats = Matrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 3.0], vec![5.0, 7.0]]).unwrap();
        let tl = TokenTimeline::new(vec![0.1, 0.5, 3.2], 1.5).unwrap();
        let a = align_tokens_to_tr(&feats, &tl, 3).unwrap();
        assert_eq!(a.features.row(0), &[2.0, 2.0]);
        assert_eq!(a.features.row(1), &[0.0, 0.0]);
        assert_eq!(a.features.row(2), &[5.0, 7.0]);
        assert_eq!(a.empty_mask, vec![false, true, false]);
    }

    #[test]
    fn boundary_token_goes_to_later_tr() {
        let feats = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let tl = TokenTimeline::new(vec![0.0, 1.5], 1.5).unwrap();
        let a = align_tokens_to_tr(&feats, &tl, 2).unwrap();
        assert_eq!(a.tokens_per_tr, vec![1, 1]);
    }

    #[test]
    fn token_past_end() {
        let feats = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let tl = TokenTimeline::new(vec![3.0], 1.5).unwrap();
        assert!(matches!(align_tokens_to_tr(&feats, &tl, 2), Err(Error::Range(_))));
    }

    #[test]
    fn invalid_timelines() {
        assert!(TokenTimeline::new(vec![1.0, 0.5], 1.5).is_err());
        assert!(TokenTimeline::new(vec![0.0], 0.0).is_err());
        let feats = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let tl = TokenTimeline::new(vec![0.0, 0.1], 1.5).unwrap();
        assert!(matches!(align_tokens_to_tr(&feats, &tl, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tl.json");
        std::fs::write(&p, r#"{"tr_seconds": 1.5, "token_times": [0.0, 0.2, 1.9]}"#).unwrap();
        let tl = TokenTimeline::load(&p).unwrap();
        assert_eq!(tl.token_times, vec![0.0, 0.2, 1.9]);
        tl.store(&p).unwrap();
        assert_eq!(TokenTimeline::load(&p).unwrap(), tl);
    }
}
