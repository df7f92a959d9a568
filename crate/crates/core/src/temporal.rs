//! Autocorrelation and exponential-decay time constants for voxels (TR units)
//! and language-model feature dimensions (token units).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BoldMatrix;
use crate::mat::stats::pearson_unchecked;
use crate::mat::{Correlation, Matrix};
use crate::par;

pub const LAMBDA_MIN: f64 = 0.1;
pub const LAMBDA_CAP: f64 = 100.0;
pub const GRID_POINTS: usize = 200;
pub const DEFAULT_MAX_LAG_TR: usize = 10;
pub const DEFAULT_MAX_LAG_TOKENS: usize = 50;
pub const DISPLAY_THRESHOLD_SECONDS: f64 = 1.5;

/// Pearson correlation of `series[τ..]` with `series[..n−τ]`.
pub fn autocorr(series: &[f64], tau: usize) -> Result<Correlation> {
    if tau + 2 >= series.len() {
        return Err(Error::range(format!(
            "lag {tau} needs more than {} samples, got {}",
            tau + 2,
            series.len()
        )));
    }
    let n = series.len();
    Ok(pearson_unchecked(&series[tau..], &series[..n - tau]))
}

/// `AC(τ)` for `τ = 1..=max_lag`.
pub fn autocorr_curve(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    (1..=max_lag)
        .map(|tau| autocorr(series, tau).map(|c| c.value))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConstant {
    pub lambda: f64,
    /// Sum of squared residuals at `lambda`.
    pub residual: f64,
    /// The optimum sits on a search bound.
    pub degenerate: bool,
}

fn objective(ac: &[f64], lambda: f64) -> f64 {
    ac.iter()
        .enumerate()
        .filter(|(_, a)| !a.is_nan())
        .map(|(i, a)| {
            let tau = (i + 1) as f64;
            let r = (-tau / lambda).exp() - a;
            r * r
        })
        .sum()
}

fn lambda_grid() -> Vec<f64> {
    let (lo, hi) = (LAMBDA_MIN.ln(), LAMBDA_CAP.ln());
    let mut grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect();
    grid[0] = LAMBDA_MIN;
    grid[GRID_POINTS - 1] = LAMBDA_CAP;
    grid
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Fits `exp(−τ/λ)` to `ac[τ−1]`, `τ = 1..=ac.len()`, by least squares.
///
/// Log-spaced grid on `[LAMBDA_MIN, LAMBDA_CAP]`, then golden-section
/// refinement between the best grid point's neighbours. NaN entries are
/// skipped; negative values stay in the objective.
pub fn fit_time_constant(ac: &[f64]) -> Result<TimeConstant> {
    if ac.len() < 2 {
        return Err(Error::config(format!("need at least 2 lags, got {}", ac.len())));
    }
    if ac.iter().all(|a| a.is_nan()) {
        return Err(Error::Fit("autocorrelation is all NaN".into()));
    }
    if let Some(a) = ac.iter().find(|a| a.is_infinite()) {
        return Err(Error::Fit(format!("autocorrelation value {a}")));
    }
    let grid = lambda_grid();
    let f = |l: f64| objective(ac, l);
    let values: Vec<f64> = grid.iter().map(|&l| f(l)).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .unwrap();

    if best == 0 || best == grid.len() - 1 {
        return Ok(TimeConstant {
            lambda: grid[best],
            residual: values[best],
            degenerate: true,
        });
    }
    let refined = golden_section(f, grid[best - 1], grid[best + 1]);
    let (lambda, residual) = if f(refined) <= values[best] {
        (refined, f(refined))
    } else {
        (grid[best], values[best])
    };
    Ok(TimeConstant {
        lambda,
        residual,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Trs,
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConstantTable {
    pub unit: TimeUnit,
    /// Seconds per lag unit, known for TR-sampled series.
    pub seconds_per_unit: Option<f64>,
    pub max_lag: usize,
    pub series_ids: Vec<String>,
    pub entries: Vec<TimeConstant>,
}

impl TimeConstantTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    pub fn lambda_seconds(&self) -> Option<Vec<f64>> {
        let s = self.seconds_per_unit?;
        Some(self.entries.iter().map(|e| e.lambda * s).collect())
    }

    /// `series_id,lambda,residual,flag` with `lambda` in the table's unit.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("series_id,lambda,residual,flag\n");
        for (id, e) in self.series_ids.iter().zip(&self.entries) {
            let _ = writeln!(s, "{id},{},{},{}", e.lambda, e.residual, u8::from(e.degenerate));
        }
        s
    }

    /// Rows whose time constant exceeds `threshold_seconds`, flagged fits
    /// dropped. Only meaningful for TR-sampled tables.
    pub fn display_csv(&self, threshold_seconds: f64) -> Result<String> {
        let sec = self
            .seconds_per_unit
            .ok_or_else(|| Error::config("display threshold needs a TR duration"))?;
        let mut s = String::from("series_id,lambda_tr,lambda_seconds\n");
        for (id, e) in self.series_ids.iter().zip(&self.entries) {
            let seconds = e.lambda * sec;
            if !e.degenerate && seconds > threshold_seconds {
                let _ = writeln!(s, "{id},{},{seconds}", e.lambda);
            }
        }
        Ok(s)
    }
}

fn column_fits(x: &Matrix, max_lag: usize) -> Result<Vec<TimeConstant>> {
    if x.rows() <= max_lag + 2 {
        return Err(Error::range(format!(
            "{} samples too short for max lag {max_lag}",
            x.rows()
        )));
    }
    par::try_map_indexed(x.cols(), |j| {
        fit_time_constant(&autocorr_curve(&x.column(j), max_lag)?)
    })
}

/// Per-voxel time constants in TRs, with seconds derived from the TR.
pub fn time_constant_map(bold: &BoldMatrix, max_lag: usize) -> Result<TimeConstantTable> {
    Ok(TimeConstantTable {
        unit: TimeUnit::Trs,
        seconds_per_unit: Some(bold.tr_seconds),
        max_lag,
        series_ids: bold.voxel_ids.clone(),
        entries: column_fits(&bold.data, max_lag)?,
    })
}

/// Per-dimension time constants in tokens on raw token-level features.
pub fn lm_feature_time_constants(x: &Matrix, max_lag: usize) -> Result<TimeConstantTable> {
    Ok(TimeConstantTable {
        unit: TimeUnit::Tokens,
        seconds_per_unit: None,
        max_lag,
        series_ids: (0..x.cols()).map(|j| j.to_string()).collect(),
        entries: column_fits(x, max_lag)?,
    })
}
