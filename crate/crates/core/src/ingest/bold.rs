use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Voxel time series: `T × l` data sampled every `tr_seconds`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldMatrix {
    pub data: Matrix,
    pub tr_seconds: f64,
    pub voxel_ids: Vec<String>,
}

impl BoldMatrix {
    pub fn new(data: Matrix, tr_seconds: f64, voxel_ids: Vec<String>) -> Result<Self> {
        if data.rows() < 2 {
            return Err(Error::dim(format!("BOLD needs at least 2 TRs, got {}", data.rows())));
        }
        if voxel_ids.len() != data.cols() {
            return Err(Error::dim(format!(
                "{} voxel ids for {} voxels",
                voxel_ids.len(),
                data.cols()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = voxel_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::config(format!("duplicate voxel id {dup:?}")));
        }
        if !(tr_seconds > 0.0) || !tr_seconds.is_finite() {
            return Err(Error::config(format!("tr_seconds must be positive, got {tr_seconds}")));
        }
        Ok(BoldMatrix {
            data,
            tr_seconds,
            voxel_ids,
        })
    }

    /// Voxel ids `"0".."l-1"`.
    pub fn with_index_ids(data: Matrix, tr_seconds: f64) -> Result<Self> {
        let ids = (0..data.cols()).map(|i| i.to_string()).collect();
        BoldMatrix::new(data, tr_seconds, ids)
    }

    pub fn n_tr(&self) -> usize {
        self.data.rows()
    }

    pub fn n_voxels(&self) -> usize {
        self.data.cols()
    }
}
