//! ROI aggregation, ROI selection, the integration index and the rank
//! comparisons between integration and time constants.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::AccuracyMap;
use crate::error::{Error, Result};
use crate::mat::{spearman, SpearmanResult};
use crate::temporal::TimeConstantTable;

pub const DEFAULT_ROI_THRESHOLD: f64 = 0.06;
/// ROIs with a larger share of flagged time-constant fits are dropped.
pub const MAX_FLAGGED_FRACTION: f64 = 0.5;

/// Voxel id → ROI label. Each voxel belongs to at most one ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiTable {
    entries: Vec<(String, String)>,
}

impl RoiTable {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some((v, _)) = entries.iter().find(|(v, _)| !seen.insert(v.as_str())) {
            return Err(Error::config(format!("voxel {v:?} assigned to more than one ROI")));
        }
        Ok(RoiTable { entries })
    }

    /// Labels in voxel order with ids `"0".."n-1"`.
    pub fn from_labels(labels: &[String]) -> Self {
        RoiTable {
            entries: labels
                .iter()
                .enumerate()
                .map(|(i, r)| (i.to_string(), r.clone()))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn rois(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.entries.iter().map(|(_, r)| r.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// ROI → positions of its voxels within `voxel_ids`.
    pub fn members(&self, voxel_ids: &[String]) -> Result<BTreeMap<String, Vec<usize>>> {
        let pos: HashMap<&str, usize> =
            voxel_ids.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (v, r) in &self.entries {
            let &i = pos
                .get(v.as_str())
                .ok_or_else(|| Error::dim(format!("ROI table voxel {v:?} missing from map")))?;
            out.entry(r.clone()).or_default().push(i);
        }
        for idx in out.values_mut() {
            idx.sort_unstable();
        }
        Ok(out)
    }

    /// `voxel_id,roi_label` rows; `#` lines and a header are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (v, r) = line.split_once(',').ok_or_else(|| {
                Error::format(i as u64, format!("expected voxel_id,roi_label on line {}", i + 1))
            })?;
            let (v, r) = (v.trim(), r.trim());
            if entries.is_empty() && v == "voxel_id" {
                continue;
            }
            entries.push((v.to_string(), r.to_string()));
        }
        RoiTable::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RoiTable::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("voxel_id,roi_label\n");
        for (v, r) in &self.entries {
            let _ = writeln!(s, "{v},{r}");
        }
        s
    }
}

fn roi_means(map: &AccuracyMap, table: &RoiTable) -> Result<BTreeMap<String, (f64, usize)>> {
    Ok(table
        .members(&map.voxel_ids)?
        .into_iter()
        .map(|(r, idx)| {
            let mean = idx.iter().map(|&i| map.values[i]).sum::<f64>() / idx.len() as f64;
            (r, (mean, idx.len()))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSelection {
    pub threshold: f64,
    /// Selected ROI labels, sorted.
    pub selected: Vec<String>,
    pub n_candidates: usize,
    /// Nothing passed the threshold; rank operations refuse this selection.
    pub empty: bool,
}

/// ROIs whose mean accuracy on `full_map` exceeds `threshold`.
pub fn select_rois(full_map: &AccuracyMap, table: &RoiTable, threshold: f64) -> Result<RoiSelection> {
    let means = roi_means(full_map, table)?;
    let selected: Vec<String> = means
        .iter()
        .filter(|(_, (m, _))| *m > threshold)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(RoiSelection {
        threshold,
        empty: selected.is_empty(),
        n_candidates: means.len(),
        selected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiValue {
    pub roi: String,
    pub value: f64,
    pub n_voxels: usize,
}

/// Per-ROI mean of a difference map over the selected ROIs. Selected labels
/// with no voxels in the table are skipped and returned separately.
pub fn integration_index(
    diff: &AccuracyMap,
    table: &RoiTable,
    selection: &RoiSelection,
) -> Result<(Vec<RoiValue>, Vec<String>)> {
    let means = roi_means(diff, table)?;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for r in &selection.selected {
        match means.get(r) {
            Some(&(value, n_voxels)) => out.push(RoiValue {
                roi: r.clone(),
                value,
                n_voxels,
            }),
            None => skipped.push(r.clone()),
        }
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiLambda {
    pub roi: String,
    /// Mean over non-flagged voxels, in seconds when the table has a TR.
    pub mean_lambda: f64,
    pub n_used: usize,
    pub n_flagged: usize,
}

/// Per-ROI mean time constant over non-flagged voxels. ROIs with more than
/// half their voxels flagged go to the second list.
pub fn roi_mean_lambda(
    lambdas: &TimeConstantTable,
    table: &RoiTable,
    rois: &[String],
) -> Result<(Vec<RoiLambda>, Vec<String>)> {
    let members = table.members(&lambdas.series_ids)?;
    let scale = lambdas.seconds_per_unit.unwrap_or(1.0);
    let mut out = Vec::new();
    let mut excluded = Vec::new();
    for r in rois {
        let Some(idx) = members.get(r) else {
            excluded.push(r.clone());
            continue;
        };
        let used: Vec<f64> = idx
            .iter()
            .map(|&i| lambdas.entries[i])
            .filter(|e| !e.degenerate)
            .map(|e| e.lambda * scale)
            .collect();
        let n_flagged = idx.len() - used.len();
        if used.is_empty() || n_flagged as f64 > MAX_FLAGGED_FRACTION * idx.len() as f64 {
            excluded.push(r.clone());
            continue;
        }
        out.push(RoiLambda {
            roi: r.clone(),
            mean_lambda: used.iter().sum::<f64>() / used.len() as f64,
            n_used: used.len(),
            n_flagged,
        });
    }
    Ok((out, excluded))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyRow {
    pub roi: String,
    pub index: f64,
    pub mean_lambda: f64,
    pub n_voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub threshold: f64,
    pub n_candidates: usize,
    pub n_selected: usize,
    /// Sorted by ROI label.
    pub rows: Vec<HierarchyRow>,
    /// Selected ROIs left out for missing voxels or too many flagged fits.
    pub excluded: Vec<String>,
    pub spearman: SpearmanResult,
}

impl HierarchyReport {
    /// `roi,index,lambda` scatter data.
    pub fn scatter_csv(&self) -> String {
        let mut s = String::from("roi,index,lambda\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.roi, r.index, r.mean_lambda);
        }
        s
    }
}

/// Spearman between integration index and mean time constant over the
/// ROIs present in both lists.
pub fn rank_report(
    selection: &RoiSelection,
    index: &[RoiValue],
    lambdas: &[RoiLambda],
    excluded: &[String],
    n_perm: usize,
    seed: u64,
) -> Result<HierarchyReport> {
    if selection.empty {
        return Err(Error::config(format!(
            "no ROI passed the accuracy threshold {}",
            selection.threshold
        )));
    }
    let lam: HashMap<&str, f64> = lambdas.iter().map(|l| (l.roi.as_str(), l.mean_lambda)).collect();
    let mut rows: Vec<HierarchyRow> = index
        .iter()
        .filter_map(|iv| {
            lam.get(iv.roi.as_str()).map(|&mean_lambda| HierarchyRow {
                roi: iv.roi.clone(),
                index: iv.value,
                mean_lambda,
                n_voxels: iv.n_voxels,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.roi.cmp(&b.roi));
    if rows.len() < 4 {
        return Err(Error::config(format!(
            "rank correlation needs at least 4 ROIs, {} remain",
            rows.len()
        )));
    }
    let a: Vec<f64> = rows.iter().map(|r| r.index).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.mean_lambda).collect();
    let spearman = spearman(&a, &b, n_perm, seed)?;
    let mut excluded = excluded.to_vec();
    excluded.sort();
    Ok(HierarchyReport {
        threshold: selection.threshold,
        n_candidates: selection.n_candidates,
        n_selected: selection.selected.len(),
        rows,
        excluded,
        spearman,
    })
}

/// Spearman between per-dimension in-degree and token-unit time constant,
/// skipping dimensions with flagged fits.
pub fn degree_vs_lambda(
    in_degrees: &[usize],
    lambdas: &TimeConstantTable,
    n_perm: usize,
    seed: u64,
) -> Result<SpearmanResult> {
    if in_degrees.len() != lambdas.len() {
        return Err(Error::dim(format!(
            "{} degrees for {} time constants",
            in_degrees.len(),
            lambdas.len()
        )));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = in_degrees
        .iter()
        .zip(&lambdas.entries)
        .filter(|(_, e)| !e.degenerate)
        .map(|(&d, e)| (d as f64, e.lambda))
        .unzip();
    spearman(&a, &b, n_perm, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{diff_map, Provenance};
    use crate::temporal::{TimeConstant, TimeUnit};

    fn map(values: Vec<f64>) -> AccuracyMap {
        AccuracyMap {
            voxel_ids: (0..values.len()).map(|i| i.to_string()).collect(),
            values,
            provenance: Provenance::new("m"),
        }
    }

    fn table(labels: &[&str]) -> RoiTable {
        RoiTable::from_labels(&labels.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    fn lambdas(values: &[f64], flags: &[bool]) -> TimeConstantTable {
        TimeConstantTable {
            unit: TimeUnit::Trs,
            seconds_per_unit: Some(1.5),
            max_lag: 10,
            series_ids: (0..values.len()).map(|i| i.to_string()).collect(),
            entries: values
                .iter()
                .zip(flags)
                .map(|(&lambda, &degenerate)| TimeConstant {
                    lambda,
                    residual: 0.0,
                    degenerate,
                })
                .collect(),
        }
    }

    #[test]
    fn selection_thresholds() {
        let t = table(&["a", "a", "b", "c"]);
        let m = map(vec![0.1, 0.3, 0.05, 0.07]);
        let all = select_rois(&m, &t, 0.0).unwrap();
        assert_eq!(all.selected, vec!["a", "b", "c"]);
        let some = select_rois(&m, &t, 0.06).unwrap();
        assert_eq!(some.selected, vec!["a", "c"]);
        let none = select_rois(&m, &t, 1.0).unwrap();
        assert!(none.empty && none.selected.is_empty());
        assert!(rank_report(&none, &[], &[], &[], 10, 0).is_err());
    }

    #[test]
    fn index_uniform_and_single_voxel() {
        let t = table(&["a", "a", "b"]);
        let sel = select_rois(&map(vec![1.0; 3]), &t, 0.0).unwrap();
        let (idx, skipped) = integration_index(&map(vec![0.2; 3]), &t, &sel).unwrap();
        assert!(skipped.is_empty());
        assert!(idx.iter().all(|r| (r.value - 0.2).abs() < 1e-15));
        let (idx, _) = integration_index(&map(vec![0.0, 0.0, 0.7]), &t, &sel).unwrap();
        assert_eq!(idx[1].value, 0.7);
        assert_eq!(idx[1].n_voxels, 1);
    }

    #[test]
    fn aggregation_is_linear() {
        let t = table(&["a", "b", "a", "b", "c"]);
        let a = map(vec![0.1, 0.4, -0.2, 0.3, 0.9]);
        let b = map(vec![0.5, 0.1, 0.0, 0.2, -0.1]);
        let sel = select_rois(&map(vec![1.0; 5]), &t, 0.0).unwrap();
        let (d, _) = integration_index(&diff_map(&a, &b).unwrap(), &t, &sel).unwrap();
        let (ia, _) = integration_index(&a, &t, &sel).unwrap();
        let (ib, _) = integration_index(&b, &t, &sel).unwrap();
        for i in 0..3 {
            assert!((d[i].value - (ia[i].value - ib[i].value)).abs() < 1e-15);
        }
    }

    #[test]
    fn flagged_voxels_drop_out() {
        let t = table(&["a", "a", "a", "b", "b"]);
        let l = lambdas(&[2.0, 4.0, 100.0, 1.0, 0.1], &[false, false, true, false, true]);
        let (rows, excluded) = roi_mean_lambda(&l, &t, &["a".into(), "b".into()]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].mean_lambda - 4.5).abs() < 1e-12);
        assert_eq!(rows[0].n_flagged, 1);
        assert!(excluded.is_empty());

        let l = lambdas(&[2.0, 4.0, 100.0, 1.0, 0.1], &[true, true, false, false, true]);
        let (rows, excluded) = roi_mean_lambda(&l, &t, &["a".into(), "b".into()]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(excluded, vec!["a"]);
    }

    fn report_for(index: &[f64], lam: &[f64], names: &[&str]) -> HierarchyReport {
        let sel = RoiSelection {
            threshold: 0.06,
            selected: names.iter().map(|s| s.to_string()).collect(),
            n_candidates: names.len(),
            empty: false,
        };
        let iv: Vec<RoiValue> = names
            .iter()
            .zip(index)
            .map(|(r, &value)| RoiValue {
                roi: r.to_string(),
                value,
                n_voxels: 1,
            })
            .collect();
        let lv: Vec<RoiLambda> = names
            .iter()
            .zip(lam)
            .map(|(r, &mean_lambda)| RoiLambda {
                roi: r.to_string(),
                mean_lambda,
                n_used: 1,
                n_flagged: 0,
            })
            .collect();
        rank_report(&sel, &iv, &lv, &[], 500, 3).unwrap()
    }

    #[test]
    fn perfect_ranking() {
        let r = report_for(&[0.1, 0.2, 0.3, 0.4, 0.5], &[1.0, 2.0, 5.0, 9.0, 20.0], &["a", "b", "c", "d", "e"]);
        assert!((r.spearman.rho - 1.0).abs() < 1e-12);
        assert_eq!(r.scatter_csv().lines().next(), Some("roi,index,lambda"));
    }

    #[test]
    fn order_and_monotone_rescaling_invariance() {
        let idx = [0.3, -0.1, 0.2, 0.5, 0.0, 0.4];
        let lam = [2.0, 3.0, 1.0, 6.0, 4.0, 5.0];
        let names = ["a", "b", "c", "d", "e", "f"];
        let base = report_for(&idx, &lam, &names);
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        let mut rnames = names;
        rnames.reverse();
        let shuffled = report_for(&rev(&idx), &rev(&lam), &rnames);
        assert_eq!(base, shuffled);
        let seconds: Vec<f64> = lam.iter().map(|l| l * 1.5).collect();
        let logged: Vec<f64> = lam.iter().map(|l| l.ln()).collect();
        assert_eq!(report_for(&idx, &seconds, &names).spearman, base.spearman);
        assert_eq!(report_for(&idx, &logged, &names).spearman, base.spearman);
    }

    #[test]
    fn too_few_rois() {
        let sel = RoiSelection {
            threshold: 0.0,
            selected: vec!["a".into()],
            n_candidates: 1,
            empty: false,
        };
        assert!(rank_report(&sel, &[], &[], &[], 10, 0).is_err());
    }

    #[test]
    fn degree_vs_lambda_skips_flagged() {
        let l = lambdas(&[1.0, 2.0, 3.0, 4.0, 5.0, 0.1], &[false, false, false, false, false, true]);
        let r = degree_vs_lambda(&[1, 2, 3, 4, 5, 99], &l, 200, 0).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        assert_eq!(r.n, 5);
        assert!(degree_vs_lambda(&[1, 2], &l, 10, 0).is_err());
    }

    #[test]
    fn roi_csv_round_trip() {
        let t = table(&["v1", "v1", "mt"]);
        let back = RoiTable::parse_csv(&format!("# cfg\n{}", t.to_csv())).unwrap();
        assert_eq!(back, t);
        assert!(RoiTable::parse_csv("0,a\n0,b\n").is_err());
        assert!(RoiTable::parse_csv("0;a\n").is_err());
    }

    #[test]
    fn unknown_voxel_is_dimension_error() {
        let t = RoiTable::new(vec![("x".into(), "a".into())]).unwrap();
        assert!(matches!(select_rois(&map(vec![0.1]), &t, 0.0), Err(Error::Dimension(_))));
    }
}
