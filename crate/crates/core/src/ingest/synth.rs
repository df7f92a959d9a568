//! Synthetic features and BOLD with a planted hierarchy.
//!
//! Features are the output of a one-block causal mixing network driven by
//! white Gaussian source activity, so every feature has a planted time
//! constant and a planted set of source dimensions it reads from. Voxels
//! mix delayed features, are smoothed by a per-voxel AR(1) filter, and get
//! white measurement noise.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::align::{TokenTimeline, DEFAULT_TR_SECONDS};
use super::bold::BoldMatrix;
use crate::causal::Level;
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::toylm::{Block, ToyLm};

/// Hemodynamic delays a voxel may carry, in TRs.
pub const HEMO_LAG_RANGE: std::ops::RangeInclusive<usize> = 3..=9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_tr: usize,
    pub tr_seconds: f64,
    pub seed: u64,
    pub noise_sigma: f64,
    /// `l × d` voxel-by-feature weights.
    pub mixing: Matrix,
    pub hemo_lags: Vec<usize>,
    pub ar1_rho: Vec<f64>,
    /// Per-feature AR(1) coefficient of the mixing network.
    pub feature_rho: Vec<f64>,
    /// `n_source × d`: which source dimensions each feature reads.
    pub feature_sources: Matrix,
    pub feature_labels: Vec<Level>,
    pub voxel_roi: Vec<String>,
    /// Planted hierarchy level in `[0, 1]`; `None` for ROIs with no signal.
    pub roi_levels: BTreeMap<String, Option<f64>>,
}

impl SynthSpec {
    pub fn n_voxels(&self) -> usize {
        self.mixing.rows()
    }

    pub fn n_features(&self) -> usize {
        self.mixing.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (l, d) = self.mixing.shape();
        if self.n_tr < 2 {
            return Err(Error::config("n_tr must be at least 2"));
        }
        if self.hemo_lags.len() != l || self.ar1_rho.len() != l || self.voxel_roi.len() != l {
            return Err(Error::config("per-voxel vectors must have one entry per mixing row"));
        }
        if self.feature_rho.len() != d
            || self.feature_labels.len() != d
            || self.feature_sources.cols() != d
        {
            return Err(Error::config("per-feature vectors must have one entry per mixing column"));
        }
        if let Some(lag) = self.hemo_lags.iter().find(|l| !HEMO_LAG_RANGE.contains(l)) {
            return Err(Error::config(format!("hemodynamic lag {lag} outside 3..=9")));
        }
        if self.hemo_lags.iter().any(|&lag| lag >= self.n_tr) {
            return Err(Error::config("hemodynamic lag longer than the run"));
        }
        let bad_rho = |r: &f64| !(0.0..1.0).contains(r);
        if self.ar1_rho.iter().any(bad_rho) || self.feature_rho.iter().any(bad_rho) {
            return Err(Error::config("AR(1) coefficients must lie in [0, 1)"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::config("noise_sigma must be >= 0"));
        }
        if !(self.tr_seconds > 0.0) {
            return Err(Error::config("tr_seconds must be positive"));
        }
        Ok(())
    }

    /// The causal mixing network mapping source activity to features.
    ///
    /// Column `j` of the source weights is scaled to `sqrt(1 − ρⱼ²)/‖·‖` so
    /// each stationary feature has unit variance.
    pub fn network(&self) -> Result<ToyLm> {
        let src = &self.feature_sources;
        let mut weight = Matrix::zeros(src.rows(), src.cols());
        for j in 0..src.cols() {
            let norm = src.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let s = (1.0 - self.feature_rho[j].powi(2)).sqrt() / norm;
            for i in 0..src.rows() {
                weight.set(i, j, src.get(i, j) * s);
            }
        }
        ToyLm::from_blocks(vec![Block::CausalMix {
            weight,
            decay: self.feature_rho.clone(),
        }])
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// White source activity (layer 0 of [`SynthOutput::network`]).
    pub source: Matrix,
    /// `n_tr × d` features (layer 1 of the network).
    pub features: Matrix,
    pub bold: BoldMatrix,
    pub truth: SynthSpec,
    pub network: ToyLm,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (l, _) = spec.mixing.shape();
    let t = spec.n_tr;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_src = spec.feature_sources.rows();
    let source = Matrix::from_fn(t, n_src, |_, _| rng.sample(StandardNormal))?;
    let network = spec.network()?;
    let features = network.run_from(0, &source)?.pop().expect("one block");

    let mut bold = Matrix::zeros(t, l);
    for v in 0..l {
        let lag = spec.hemo_lags[v];
        let rho = spec.ar1_rho[v];
        let gain = (1.0 - rho * rho).sqrt();
        let weights = spec.mixing.row(v);
        let mut prev = 0.0;
        for step in 0..t {
            let drive = if step >= lag {
                features
                    .row(step - lag)
                    .iter()
                    .zip(weights)
                    .map(|(f, w)| f * w)
                    .sum::<f64>()
            } else {
                0.0
            };
            let b = rho * prev + gain * drive;
            prev = b;
            bold.set(step, v, b);
        }
    }
    if spec.noise_sigma > 0.0 {
        for step in 0..t {
            for v in 0..l {
                let e: f64 = rng.sample(StandardNormal);
                bold.set(step, v, bold.get(step, v) + spec.noise_sigma * e);
            }
        }
    }
    let bold = BoldMatrix::with_index_ids(Matrix::new(t, l, bold.into_values())?, spec.tr_seconds)?;
    Ok(SynthOutput {
        source,
        features,
        bold,
        truth: spec.clone(),
        network,
    })
}

/// Parameters for a planted-hierarchy [`SynthSpec`].
///
/// Language ROIs get evenly spaced levels `h ∈ [0, 1]`. A voxel at level `h`
/// weights high-integration features by `h` and low-integration ones by
/// `1 − h`, and its AR(1) coefficient grows with `h`. High-integration
/// features read four source blocks and are slow; low ones read a single
/// block and are fast. Noise ROIs carry no feature signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedHierarchy {
    pub n_tr: usize,
    pub n_voxels: usize,
    pub n_features: usize,
    pub n_rois: usize,
    pub n_noise_rois: usize,
    pub noise_sigma: f64,
    pub tr_seconds: f64,
    pub seed: u64,
}

impl Default for PlantedHierarchy {
    fn default() -> Self {
        PlantedHierarchy {
            n_tr: 2000,
            n_voxels: 200,
            n_features: 20,
            n_rois: 20,
            n_noise_rois: 0,
            noise_sigma: 1.0,
            tr_seconds: DEFAULT_TR_SECONDS,
            seed: 0,
        }
    }
}

const SOURCE_BLOCKS: usize = 5;
const HIGH_READS: usize = 4;

impl PlantedHierarchy {
    pub fn build(&self) -> Result<SynthSpec> {
        let d = self.n_features;
        if d < 2 || self.n_voxels == 0 || self.n_rois == 0 {
            return Err(Error::config(
                "planted hierarchy needs >= 2 features, >= 1 voxel and >= 1 ROI",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_5ca1e);

        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        let mut labels = vec![Level::Low; d];
        for &j in &order[..d / 2] {
            labels[j] = Level::High;
        }

        let feature_rho: Vec<f64> = labels
            .iter()
            .map(|l| match l {
                Level::Low => rng.random_range(0.1..0.3),
                Level::High => rng.random_range(0.8..0.9),
            })
            .collect();

        let n_src = d;
        let n_blocks = SOURCE_BLOCKS.min(n_src);
        let block_of = |i: usize| i * n_blocks / n_src;
        let mut sources = Matrix::zeros(n_src, d);
        for (j, label) in labels.iter().enumerate() {
            let mut blocks: Vec<usize> = (0..n_blocks).collect();
            blocks.shuffle(&mut rng);
            let reads = match label {
                Level::Low => 1,
                Level::High => HIGH_READS.min(n_blocks),
            };
            let chosen = &blocks[..reads];
            for i in 0..n_src {
                if chosen.contains(&block_of(i)) {
                    sources.set(i, j, signed_magnitude(&mut rng));
                }
            }
        }

        let n_total_rois = self.n_rois + self.n_noise_rois;
        let mut roi_levels = BTreeMap::new();
        let mut roi_names = Vec::with_capacity(n_total_rois);
        for r in 0..self.n_rois {
            let name = format!("roi_{r:02}");
            let h = if self.n_rois == 1 {
                0.5
            } else {
                r as f64 / (self.n_rois - 1) as f64
            };
            roi_levels.insert(name.clone(), Some(h));
            roi_names.push(name);
        }
        for r in 0..self.n_noise_rois {
            let name = format!("noise_{r:02}");
            roi_levels.insert(name.clone(), None);
            roi_names.push(name);
        }

        let mut mixing = Matrix::zeros(self.n_voxels, d);
        let mut ar1_rho = Vec::with_capacity(self.n_voxels);
        let mut hemo_lags = Vec::with_capacity(self.n_voxels);
        let mut voxel_roi = Vec::with_capacity(self.n_voxels);
        for v in 0..self.n_voxels {
            let roi = &roi_names[v % n_total_rois];
            voxel_roi.push(roi.clone());
            hemo_lags.push(rng.random_range(HEMO_LAG_RANGE));
            match roi_levels[roi] {
                Some(h) => {
                    let mut row: Vec<f64> = labels
                        .iter()
                        .map(|l| {
                            let base = if *l == Level::High { h } else { 1.0 - h };
                            base * signed_magnitude(&mut rng)
                        })
                        .collect();
                    let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|w| *w /= norm);
                    }
                    mixing.row_mut(v).copy_from_slice(&row);
                    let jitter: f64 = rng.random_range(-0.05..0.05);
                    ar1_rho.push((0.1 + 0.75 * h + jitter).clamp(0.0, 0.95));
                }
                None => ar1_rho.push(rng.random_range(0.0..0.9)),
            }
        }

        let spec = SynthSpec {
            n_tr: self.n_tr,
            tr_seconds: self.tr_seconds,
            seed: self.seed,
            noise_sigma: self.noise_sigma,
            mixing,
            hemo_lags,
            ar1_rho,
            feature_rho,
            feature_sources: sources,
            feature_labels: labels,
            voxel_roi,
            roi_levels,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn signed_magnitude(rng: &mut ChaCha8Rng) -> f64 {
    let m: f64 = rng.random_range(0.5..1.5);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Expands TR-level features into a token stream: each TR gets one to three
/// evenly spaced tokens carrying that TR's feature row, so averaging the
/// tokens back per TR reproduces the input exactly.
pub fn token_stream(features: &Matrix, tr_seconds: f64, seed: u64) -> Result<(Matrix, TokenTimeline)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for tr in 0..features.rows() {
        let n: usize = rng.random_range(1..=3);
        for k in 0..n {
            times.push(tr_seconds * (tr as f64 + (k as f64 + 0.5) / n as f64));
            rows.push(features.row(tr).to_vec());
        }
    }
    let m = if rows.is_empty() {
        Matrix::zeros(0, features.cols())
    } else {
        Matrix::from_rows(&rows)?
    };
    Ok((m, TokenTimeline::new(times, tr_seconds)?))
}
