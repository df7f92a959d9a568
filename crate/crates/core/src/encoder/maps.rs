use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fit::RidgeResult;
use crate::error::{Error, Result};

/// Where an accuracy map came from. Difference maps list both parents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub feature_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<Provenance>,
}

impl Provenance {
    pub fn new(feature_set: impl Into<String>) -> Self {
        Provenance {
            feature_set: feature_set.into(),
            ..Provenance::default()
        }
    }

    pub fn with_layer(mut self, layer: usize) -> Self {
        self.layer = Some(layer);
        self
    }

    pub fn with_partition(mut self, partition: impl Into<String>) -> Self {
        self.partition = Some(partition.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMap {
    pub voxel_ids: Vec<String>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl AccuracyMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// `voxel_id,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("voxel_id,value\n");
        for (id, v) in self.voxel_ids.iter().zip(&self.values) {
            let _ = writeln!(s, "{id},{v}");
        }
        s
    }
}

/// Per-voxel mean held-out accuracy.
pub fn accuracy_map(r: &RidgeResult, provenance: Provenance) -> AccuracyMap {
    AccuracyMap {
        voxel_ids: r.voxel_ids.clone(),
        values: r.mean_accuracy.clone(),
        provenance,
    }
}

/// `a − b` voxel by voxel.
pub fn diff_map(a: &AccuracyMap, b: &AccuracyMap) -> Result<AccuracyMap> {
    if a.voxel_ids != b.voxel_ids {
        return Err(Error::dim(format!(
            "voxel sets differ ({} vs {} voxels)",
            a.len(),
            b.len()
        )));
    }
    Ok(AccuracyMap {
        voxel_ids: a.voxel_ids.clone(),
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        provenance: Provenance {
            feature_set: format!(
                "{}-{}",
                a.provenance.feature_set, b.provenance.feature_set
            ),
            layer: None,
            partition: None,
            parents: vec![a.provenance.clone(), b.provenance.clone()],
        },
    })
}

/// Layer curve for one ROI, divided by its accuracy at the reference layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiProfile {
    pub roi: String,
    pub reference_accuracy: f64,
    /// `None` when the reference accuracy is not positive.
    pub curve: Option<Vec<f64>>,
}

/// Per-ROI mean accuracy of each layer's map over the reference layer's.
/// `maps[i]` is layer `i`; `voxel_roi[v]` labels voxel `v`.
pub fn roi_layer_profile(
    maps: &[AccuracyMap],
    voxel_roi: &[String],
    reference: usize,
) -> Result<Vec<RoiProfile>> {
    if maps.len() < 2 {
        return Err(Error::config(format!("need at least 2 layer maps, got {}", maps.len())));
    }
    if reference >= maps.len() {
        return Err(Error::range(format!(
            "reference layer {reference} outside 0..{}",
            maps.len()
        )));
    }
    if let Some(m) = maps.iter().find(|m| m.len() != voxel_roi.len()) {
        return Err(Error::dim(format!(
            "map has {} voxels, ROI table has {}",
            m.len(),
            voxel_roi.len()
        )));
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (v, r) in voxel_roi.iter().enumerate() {
        members.entry(r.as_str()).or_default().push(v);
    }
    Ok(members
        .into_iter()
        .map(|(roi, voxels)| {
            let mean = |m: &AccuracyMap| {
                voxels.iter().map(|&v| m.values[v]).sum::<f64>() / voxels.len() as f64
            };
            let reference_accuracy = mean(&maps[reference]);
            let curve = (reference_accuracy > 0.0)
                .then(|| maps.iter().map(|m| mean(m) / reference_accuracy).collect());
            RoiProfile {
                roi: roi.to_string(),
                reference_accuracy,
                curve,
            }
        })
        .collect())
}
