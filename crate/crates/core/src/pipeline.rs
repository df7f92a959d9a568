//! Stage functions chaining the modules into the full analysis: perturbation
//! graph, partitioned encoding maps, time constants and the ROI ranking.

use serde::{Deserialize, Serialize};

use crate::causal::{
    causality_matrix, degree_partition, threshold_graph, CausalGraph, CausalityResult, Direction,
    FeaturePartition, DEFAULT_TAU_MAX,
};
use crate::encoder::{
    accuracy_map, diff_map, fit_encoding, fit_feature_group, AccuracyMap, EncodingConfig,
    Provenance, RidgeResult,
};
use crate::error::Result;
use crate::hierarchy::{
    degree_vs_lambda, integration_index, rank_report, roi_mean_lambda, select_rois,
    HierarchyReport, RoiTable, DEFAULT_ROI_THRESHOLD,
};
use crate::ingest::{default_lags, fir_expand, synth_generate, BoldMatrix, PlantedHierarchy, SynthOutput};
use crate::mat::stats::DEFAULT_PERMUTATIONS;
use crate::mat::{Matrix, PcaModel, SpearmanResult};
use crate::temporal::{
    lm_feature_time_constants, time_constant_map, TimeConstantTable, DEFAULT_MAX_LAG_TOKENS,
    DEFAULT_MAX_LAG_TR,
};
use crate::toylm::{perturb_layers, PerturbationRun, ToyLm, DEFAULT_SIGMA, DEFAULT_TRIALS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lags: Vec<usize>,
    pub encoding: EncodingConfig,
    pub tau_max: usize,
    pub sigma: f64,
    pub n_trials: usize,
    pub max_lag_tr: usize,
    pub max_lag_tokens: usize,
    pub roi_threshold: f64,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            lags: default_lags(),
            encoding: EncodingConfig::default(),
            tau_max: DEFAULT_TAU_MAX,
            sigma: DEFAULT_SIGMA,
            n_trials: DEFAULT_TRIALS,
            max_lag_tr: DEFAULT_MAX_LAG_TR,
            max_lag_tokens: DEFAULT_MAX_LAG_TOKENS,
            roi_threshold: DEFAULT_ROI_THRESHOLD,
            n_perm: DEFAULT_PERMUTATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CausalStage {
    pub runs: Vec<PerturbationRun>,
    pub result: CausalityResult,
    pub graph: CausalGraph,
}

/// Perturbs `source` of the clean activations and builds the graph toward
/// `target` in the spaces given by `mx` and `my`.
pub fn causal_stage(
    model: &ToyLm,
    clean: &[Matrix],
    source: usize,
    target: usize,
    mx: &PcaModel,
    my: &PcaModel,
    p: &Params,
) -> Result<CausalStage> {
    let runs = perturb_layers(model, clean, source, &[target], p.sigma, p.n_trials, p.seed)?;
    let result = causality_matrix(&runs, mx, my, p.tau_max)?;
    let graph = threshold_graph(&result)?;
    Ok(CausalStage {
        runs,
        result,
        graph,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMaps {
    pub full: RidgeResult,
    pub full_map: AccuracyMap,
    pub high_map: AccuracyMap,
    pub low_map: AccuracyMap,
    /// High minus low.
    pub diff: AccuracyMap,
}

/// Fits all features, then the high and low groups of `partition`, each
/// FIR-expanded with `p.lags`.
pub fn encoding_stage(
    features: &Matrix,
    partition: &FeaturePartition,
    bold: &BoldMatrix,
    mask: Option<&[bool]>,
    layer: Option<usize>,
    p: &Params,
) -> Result<EncodingMaps> {
    let tag = |name: &str| {
        let mut prov = Provenance::new(name);
        prov.layer = layer;
        prov
    };
    let crit = serde_json::to_value(partition.criterion)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let full = fit_encoding(&fir_expand(features, &p.lags)?, bold, &p.encoding, mask)?;
    let high = fit_feature_group(features, &partition.high(), &p.lags, bold, &p.encoding, mask)?;
    let low = fit_feature_group(features, &partition.low(), &p.lags, bold, &p.encoding, mask)?;
    let full_map = accuracy_map(&full, tag("all"));
    let high_map = accuracy_map(&high, tag("high").with_partition(crit.clone()));
    let low_map = accuracy_map(&low, tag("low").with_partition(crit));
    let diff = diff_map(&high_map, &low_map)?;
    Ok(EncodingMaps {
        full,
        full_map,
        high_map,
        low_map,
        diff,
    })
}

/// ROI selection on the full map, integration index from the difference
/// map, and its rank correlation with per-ROI mean time constants.
pub fn rank_stage(
    maps: &EncodingMaps,
    voxel_lambdas: &TimeConstantTable,
    rois: &RoiTable,
    p: &Params,
) -> Result<HierarchyReport> {
    let selection = select_rois(&maps.full_map, rois, p.roi_threshold)?;
    let (index, mut excluded) = integration_index(&maps.diff, rois, &selection)?;
    let (lams, lam_excluded) = roi_mean_lambda(voxel_lambdas, rois, &selection.selected)?;
    excluded.extend(lam_excluded);
    rank_report(&selection, &index, &lams, &excluded, p.n_perm, p.seed)
}

#[derive(Debug, Clone)]
pub struct PlantedRun {
    pub synth: SynthOutput,
    pub causal: CausalStage,
    pub partition: FeaturePartition,
    /// Fraction of feature labels matching the planted ones.
    pub partition_agreement: f64,
    pub maps: EncodingMaps,
    pub voxel_lambdas: TimeConstantTable,
    pub report: HierarchyReport,
    pub feature_lambdas: TimeConstantTable,
    pub degree_lambda: SpearmanResult,
}

/// Synthetic data with a planted hierarchy run through every stage.
///
/// The planted features are the network's own coordinates, so the graph and
/// the encoding run in raw feature space.
pub fn run_planted(planted: &PlantedHierarchy, p: &Params) -> Result<PlantedRun> {
    let synth = synth_generate(&planted.build()?)?;
    let clean = vec![synth.source.clone(), synth.features.clone()];
    let mx = PcaModel::identity(synth.source.cols());
    let my = PcaModel::identity(synth.features.cols());
    let causal = causal_stage(&synth.network, &clean, 0, 1, &mx, &my, p)?;
    let partition = degree_partition(&causal.graph, Direction::In)?;
    let partition_agreement = partition.agreement(&synth.truth.feature_labels);

    let maps = encoding_stage(&synth.features, &partition, &synth.bold, None, Some(1), p)?;
    let voxel_lambdas = time_constant_map(&synth.bold, p.max_lag_tr)?;
    let rois = RoiTable::from_labels(&synth.truth.voxel_roi);
    let report = rank_stage(&maps, &voxel_lambdas, &rois, p)?;

    let feature_lambdas = lm_feature_time_constants(&synth.features, p.max_lag_tokens)?;
    let degree_lambda = degree_vs_lambda(&causal.graph.in_degree, &feature_lambdas, p.n_perm, p.seed)?;
    Ok(PlantedRun {
        synth,
        causal,
        partition,
        partition_agreement,
        maps,
        voxel_lambdas,
        report,
        feature_lambdas,
        degree_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::Level;

    #[test]
    fn small_planted_run() {
        let planted = PlantedHierarchy {
            n_tr: 800,
            n_voxels: 60,
            n_rois: 6,
            seed: 3,
            ..PlantedHierarchy::default()
        };
        let p = Params {
            n_perm: 500,
            ..Params::default()
        };
        let run = run_planted(&planted, &p).unwrap();
        assert!(run.partition_agreement >= 0.9, "{}", run.partition_agreement);
        assert_eq!(run.partition.high().len(), 10);
        assert_eq!(run.maps.diff.len(), 60);
        assert!(run.report.spearman.rho > 0.0, "{:?}", run.report);
        assert!(run.degree_lambda.rho > 0.0);

        // High-minus-low sign follows the planted level for most voxels.
        let levels = &run.synth.truth.roi_levels;
        let mut hits = 0;
        let mut n = 0;
        for (v, roi) in run.synth.truth.voxel_roi.iter().enumerate() {
            let h = levels[roi].unwrap();
            if (h - 0.5).abs() < 0.2 {
                continue;
            }
            n += 1;
            hits += usize::from((run.maps.diff.values[v] > 0.0) == (h > 0.5));
        }
        assert!(hits as f64 >= 0.8 * n as f64, "{hits}/{n}");
        assert!(run.synth.truth.feature_labels.contains(&Level::High));
    }
}
