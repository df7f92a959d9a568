use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelKind, PartitionKind, RunConfig, Space};
use super::store::Store;
use crate::causal::{
    causality_matrix, degree_partition, graph_from_aggregate, timeconstant_partition, CausalGraph,
    Direction, FeaturePartition,
};
use crate::encoder::{shuffle_null, NullStats};
use crate::error::{Error, Result};
use crate::hierarchy::{degree_vs_lambda, HierarchyReport, RoiTable};
use crate::ingest::{
    align_tokens_to_tr, hfm, synth_generate, token_stream, BoldMatrix, SynthSpec, TokenTimeline,
};
use crate::mat::{pca_fit, pca_transform, Matrix, PcaModel, SpearmanResult};
use crate::pipeline::{encoding_stage, rank_stage, EncodingMaps, Params};
use crate::temporal::{
    lm_feature_time_constants, time_constant_map, TimeConstantTable, DISPLAY_THRESHOLD_SECONDS,
};
use crate::toylm::{import_run_dir, perturb_layers, toylm_init, PerturbationRun, ToyLm, ToyLmConfig};

const BOLD: &str = "bold.hfm";
const TOKENS: &str = "tokens.hfm";
const TIMELINE: &str = "timeline.json";
const ROIS: &str = "rois.csv";
const TRUTH: &str = "truth.json";
const TOYLM: &str = "toylm.json";
const ALIGNED: &str = "aligned.hfm";
const ALIGN_INFO: &str = "align.json";
const PCA: &str = "pca.json";
const FEATURES: &str = "features.hfm";
const CAUSAL: &str = "causal.json";
const PARTITION: &str = "partition.json";
const MAPS: &str = "maps.json";
const LAMBDA_VOXELS: &str = "lambda_voxels.json";
const LAMBDA_FEATURES: &str = "lambda_features.json";
const HIERARCHY: &str = "hierarchy.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AlignInfo {
    empty_mask: Vec<bool>,
    tokens_per_tr: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ToyLmRecord {
    config: ToyLmConfig,
    tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CausalRecord {
    layer_src: usize,
    layer_tgt: usize,
    space: Space,
    tau_max: usize,
    n_trials: usize,
    graph: CausalGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Report {
    partition: FeaturePartition,
    maps: EncodingMaps,
    hierarchy: HierarchyReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree_lambda: Option<SpearmanResult>,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub params: Params,
    pub store: Store,
}

fn activation_name(model: ModelKind, layer: usize) -> String {
    let dir = match model {
        ModelKind::Planted => "planted",
        ModelKind::Toylm => "toylm",
    };
    format!("activations/{dir}/layer_{layer:02}.hfm")
}

fn missing(what: &str) -> Error {
    Error::config(format!("{what} could not be produced"))
}

impl Ctx {
    pub fn new(cfg: RunConfig, store: Store) -> Self {
        Ctx {
            params: cfg.params(),
            cfg,
            store,
        }
    }

    // ----- synth / toylm -------------------------------------------------

    pub fn synth(&self) -> Result<()> {
        let out = synth_generate(&self.cfg.planted().build()?)?;
        let s = &self.store;
        s.write_matrix(BOLD, &out.bold.data)?;
        let (tokens, timeline) = token_stream(&out.features, out.truth.tr_seconds, self.cfg.seed)?;
        s.write_matrix(TOKENS, &tokens)?;
        s.write_json(TIMELINE, &timeline)?;
        s.write_csv(ROIS, &RoiTable::from_labels(&out.truth.voxel_roi).to_csv())?;
        s.write_json(TRUTH, &out.truth)?;
        s.write_matrix(&activation_name(ModelKind::Planted, 0), &out.source)?;
        s.write_matrix(&activation_name(ModelKind::Planted, 1), &out.features)
    }

    pub fn toylm(&self) -> Result<()> {
        let config = self.cfg.toylm_config();
        let model = toylm_init(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let tokens: Vec<usize> = (0..self.cfg.toylm_tokens)
            .map(|_| rng.random_range(0..config.vocab_size))
            .collect();
        for (l, act) in model.forward(&tokens)?.iter().enumerate() {
            self.store.write_matrix(&activation_name(ModelKind::Toylm, l), act)?;
        }
        self.store.write_json(TOYLM, &ToyLmRecord { config, tokens })
    }

    fn generated_matrix(&self, name: &str, generate: impl Fn() -> Result<()>) -> Result<Matrix> {
        if let Some(m) = self.store.read_fresh_matrix(name)? {
            return Ok(m);
        }
        generate()?;
        self.store.read_fresh_matrix(name)?.ok_or_else(|| missing(name))
    }

    fn synth_matrix(&self, name: &str) -> Result<Matrix> {
        self.generated_matrix(name, || self.synth())
    }

    fn synth_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        if let Some(v) = self.store.read_fresh_json(name)? {
            return Ok(v);
        }
        self.synth()?;
        self.store.read_fresh_json(name)?.ok_or_else(|| missing(name))
    }

    // ----- inputs --------------------------------------------------------

    fn timeline(&self) -> Result<TokenTimeline> {
        match &self.cfg.paths.timeline {
            Some(p) => TokenTimeline::load(p),
            None => {
                let tl: TokenTimeline = self.synth_json(TIMELINE)?;
                tl.validate()?;
                Ok(tl)
            }
        }
    }

    fn bold(&self) -> Result<BoldMatrix> {
        let data = match &self.cfg.paths.bold {
            Some(p) => hfm::load_matrix(p)?,
            None => self.synth_matrix(BOLD)?,
        };
        BoldMatrix::with_index_ids(data, self.timeline()?.tr_seconds)
    }

    fn tokens(&self) -> Result<Matrix> {
        match &self.cfg.paths.features {
            Some(p) => hfm::load_matrix(p),
            None => self.synth_matrix(TOKENS),
        }
    }

    fn rois(&self) -> Result<RoiTable> {
        match &self.cfg.paths.roi {
            Some(p) => RoiTable::load(p),
            None => {
                if !self.store.csv_is_fresh(ROIS) {
                    self.synth()?;
                }
                RoiTable::load(self.store.path(ROIS))
            }
        }
    }

    /// Clean activations: layers `0..=layer_tgt` from an activation
    /// directory, otherwise every layer of the configured model.
    fn activations(&self) -> Result<Vec<Matrix>> {
        if let Some(dir) = &self.cfg.paths.activations {
            return (0..=self.cfg.layer_tgt)
                .map(|l| hfm::load_matrix(dir.join(format!("layer_{l:02}.hfm"))))
                .collect();
        }
        let model = self.cfg.model;
        let n = self.network()?.n_layers() + 1;
        if self.cfg.layer_tgt >= n {
            return Err(Error::range(format!(
                "layer_tgt {} outside a model with {n} activation layers",
                self.cfg.layer_tgt
            )));
        }
        (0..n)
            .map(|l| {
                let name = activation_name(model, l);
                match model {
                    ModelKind::Planted => self.synth_matrix(&name),
                    ModelKind::Toylm => self.generated_matrix(&name, || self.toylm()),
                }
            })
            .collect()
    }

    fn network(&self) -> Result<ToyLm> {
        match self.cfg.model {
            ModelKind::Planted => self.synth_json::<SynthSpec>(TRUTH)?.network(),
            ModelKind::Toylm => toylm_init(&self.cfg.toylm_config()),
        }
    }

    // ----- align / pca ---------------------------------------------------

    pub fn align(&self) -> Result<()> {
        let tokens = self.tokens()?;
        let timeline = self.timeline()?;
        let n_tr = self.bold()?.n_tr();
        let a = align_tokens_to_tr(&tokens, &timeline, n_tr)?;
        self.store.write_matrix(ALIGNED, &a.features)?;
        self.store.write_json(
            ALIGN_INFO,
            &AlignInfo {
                empty_mask: a.empty_mask,
                tokens_per_tr: a.tokens_per_tr,
            },
        )
    }

    fn aligned(&self) -> Result<(Matrix, Vec<bool>)> {
        let m = self.generated_matrix(ALIGNED, || self.align())?;
        let info: AlignInfo = match self.store.read_fresh_json(ALIGN_INFO)? {
            Some(i) => i,
            None => {
                self.align()?;
                self.store.read_fresh_json(ALIGN_INFO)?.ok_or_else(|| missing(ALIGN_INFO))?
            }
        };
        Ok((m, info.empty_mask))
    }

    pub fn pca(&self) -> Result<()> {
        let (aligned, _) = self.aligned()?;
        let model = match self.cfg.space {
            Space::Raw => PcaModel::identity(aligned.cols()),
            Space::Pca => pca_fit(&aligned, self.cfg.pca_k)?,
        };
        self.store.write_matrix(FEATURES, &pca_transform(&model, &aligned)?)?;
        self.store.write_json(PCA, &model)
    }

    fn features(&self) -> Result<(Matrix, PcaModel)> {
        let m = self.generated_matrix(FEATURES, || self.pca())?;
        let model = match self.store.read_fresh_json(PCA)? {
            Some(p) => p,
            None => {
                self.pca()?;
                self.store.read_fresh_json(PCA)?.ok_or_else(|| missing(PCA))?
            }
        };
        Ok((m, model))
    }

    // ----- causal / partition --------------------------------------------

    fn runs(&self, clean: Option<&[Matrix]>) -> Result<Vec<PerturbationRun>> {
        if let Some(dir) = &self.cfg.paths.runs {
            let runs: Vec<PerturbationRun> = import_run_dir(dir)?
                .into_iter()
                .filter(|r| {
                    r.meta.source_layer == self.cfg.layer_src
                        && r.meta.target_layer == self.cfg.layer_tgt
                })
                .collect();
            if runs.is_empty() {
                return Err(Error::config(format!(
                    "no runs for layers {} -> {} in {}",
                    self.cfg.layer_src,
                    self.cfg.layer_tgt,
                    dir.display()
                )));
            }
            return Ok(runs);
        }
        let clean = clean.ok_or_else(|| missing("clean activations"))?;
        let model = self.network()?;
        let p = &self.params;
        let runs = perturb_layers(
            &model,
            clean,
            self.cfg.layer_src,
            &[self.cfg.layer_tgt],
            p.sigma,
            p.n_trials,
            p.seed,
        )?;
        for r in &runs {
            let stem = format!("runs/trial_{:03}", r.meta.trial);
            self.store.write_matrix(&format!("{stem}_dx.hfm"), &r.dx)?;
            self.store.write_matrix(&format!("{stem}_dy.hfm"), &r.dy)?;
            self.store.write_json(&format!("{stem}_meta.json"), &r.meta)?;
        }
        Ok(runs)
    }

    /// Target-space projection: the encoding PCA when one can be built and
    /// it fits the target layer's width, otherwise a PCA of the target
    /// activations. Resolved the same way whatever ran before.
    fn target_pca(&self, target: &Matrix) -> Result<PcaModel> {
        if let Ok((_, model)) = self.features() {
            if model.input_dim() == target.cols() {
                return Ok(model);
            }
        }
        pca_fit(target, self.cfg.pca_k)
    }

    pub fn causal(&self) -> Result<()> {
        let (src, tgt) = (self.cfg.layer_src, self.cfg.layer_tgt);
        let needs_clean = self.cfg.paths.runs.is_none() || self.cfg.space == Space::Pca;
        let clean = if needs_clean { Some(self.activations()?) } else { None };
        let runs = self.runs(clean.as_deref())?;
        let (mx, my) = match (self.cfg.space, &clean) {
            (Space::Raw, _) => (
                PcaModel::identity(runs[0].dx.cols()),
                PcaModel::identity(runs[0].dy.cols()),
            ),
            (Space::Pca, Some(c)) => (pca_fit(&c[src], self.cfg.pca_k)?, self.target_pca(&c[tgt])?),
            (Space::Pca, None) => unreachable!("clean activations loaded for PCA space"),
        };
        let res = causality_matrix(&runs, &mx, &my, self.params.tau_max)?;
        let graph = graph_from_aggregate(&res.aggregate)?;
        self.store.write_matrix("causal_aggregate.hfm", &res.aggregate)?;
        self.store.write_csv("causal_edges.csv", &graph.edges_csv(&res.aggregate))?;
        self.store.write_json("causal_degrees.json", &graph.degree_summary())?;
        self.store.write_json(
            CAUSAL,
            &CausalRecord {
                layer_src: src,
                layer_tgt: tgt,
                space: self.cfg.space,
                tau_max: res.tau_max,
                n_trials: res.n_trials,
                graph,
            },
        )
    }

    fn graph(&self) -> Result<CausalGraph> {
        if let Some(r) = self.store.read_fresh_json::<CausalRecord>(CAUSAL)? {
            return Ok(r.graph);
        }
        self.causal()?;
        let r: CausalRecord = self.store.read_fresh_json(CAUSAL)?.ok_or_else(|| missing(CAUSAL))?;
        Ok(r.graph)
    }

    /// Token-level time constants of the target layer in encoding space.
    fn encoding_space_lambdas(&self) -> Result<TimeConstantTable> {
        let acts = self.activations()?;
        let target = &acts[self.cfg.layer_tgt];
        let x = match self.cfg.space {
            Space::Raw => target.clone(),
            Space::Pca => pca_transform(&self.target_pca(target)?, target)?,
        };
        lm_feature_time_constants(&x, self.cfg.max_lag_tokens)
    }

    pub fn partition(&self) -> Result<()> {
        let p = match self.cfg.partition {
            PartitionKind::In => degree_partition(&self.graph()?, Direction::In)?,
            PartitionKind::Out => degree_partition(&self.graph()?, Direction::Out)?,
            PartitionKind::Time => timeconstant_partition(&self.encoding_space_lambdas()?)?,
        };
        self.store.write_json(PARTITION, &p)
    }

    fn partition_for(&self, n_features: usize) -> Result<FeaturePartition> {
        let p: FeaturePartition = match self.store.read_fresh_json(PARTITION)? {
            Some(p) => p,
            None => {
                self.partition()?;
                self.store.read_fresh_json(PARTITION)?.ok_or_else(|| missing(PARTITION))?
            }
        };
        if p.labels.len() != n_features {
            return Err(Error::dim(format!(
                "partition covers {} dimensions, encoding features have {n_features}",
                p.labels.len()
            )));
        }
        Ok(p)
    }

    // ----- fit / null ----------------------------------------------------

    pub fn fit(&self, shuffle: bool) -> Result<()> {
        let (features, _) = self.features()?;
        let (_, mask) = self.aligned()?;
        let bold = self.bold()?;
        let p = &self.params;
        if shuffle {
            let null = shuffle_null(
                &[features],
                &p.lags,
                &bold,
                &p.encoding,
                Some(&mask),
                self.cfg.n_shuffles,
                p.seed,
            )?;
            return self.store.write_json("null_single.json", &null);
        }
        let partition = self.partition_for(features.cols())?;
        let maps = encoding_stage(
            &features,
            &partition,
            &bold,
            Some(&mask),
            Some(self.cfg.layer_tgt),
            p,
        )?;
        for (name, m) in [
            ("acc_full.csv", &maps.full_map),
            ("acc_high.csv", &maps.high_map),
            ("acc_low.csv", &maps.low_map),
            ("acc_diff.csv", &maps.diff),
        ] {
            self.store.write_csv(name, &m.to_csv())?;
        }
        self.store.write_json(MAPS, &maps)
    }

    fn maps(&self) -> Result<EncodingMaps> {
        if let Some(m) = self.store.read_fresh_json(MAPS)? {
            return Ok(m);
        }
        self.fit(false)?;
        self.store.read_fresh_json(MAPS)?.ok_or_else(|| missing(MAPS))
    }

    pub fn null(&self) -> Result<()> {
        let (features, _) = self.features()?;
        let (_, mask) = self.aligned()?;
        let bold = self.bold()?;
        let partition = self.partition_for(features.cols())?;
        let groups = [
            features.select_columns(&partition.high())?,
            features.select_columns(&partition.low())?,
        ];
        let p = &self.params;
        let null: NullStats = shuffle_null(
            &groups,
            &p.lags,
            &bold,
            &p.encoding,
            Some(&mask),
            self.cfg.n_shuffles,
            p.seed,
        )?;
        self.store.write_json("null_diff.json", &null)
    }

    // ----- time constants / ranking / report -----------------------------

    pub fn timeconst(&self) -> Result<()> {
        let voxels = time_constant_map(&self.bold()?, self.cfg.max_lag_tr)?;
        self.store.write_csv("lambda_voxels.csv", &voxels.to_csv())?;
        self.store.write_csv(
            "lambda_voxels_display.csv",
            &voxels.display_csv(DISPLAY_THRESHOLD_SECONDS)?,
        )?;
        self.store.write_json(LAMBDA_VOXELS, &voxels)?;

        let acts = self.activations()?;
        let features = lm_feature_time_constants(&acts[self.cfg.layer_tgt], self.cfg.max_lag_tokens)?;
        self.store.write_csv("lambda_features.csv", &features.to_csv())?;
        self.store.write_json(LAMBDA_FEATURES, &features)
    }

    fn lambdas(&self, name: &str) -> Result<TimeConstantTable> {
        if let Some(t) = self.store.read_fresh_json(name)? {
            return Ok(t);
        }
        self.timeconst()?;
        self.store.read_fresh_json(name)?.ok_or_else(|| missing(name))
    }

    /// In-degree against raw token-unit time constants; only defined when
    /// the graph lives in raw space.
    fn degree_lambda(&self) -> Result<Option<SpearmanResult>> {
        if self.cfg.space != Space::Raw {
            return Ok(None);
        }
        let graph = self.graph()?;
        let lambdas = self.lambdas(LAMBDA_FEATURES)?;
        degree_vs_lambda(&graph.in_degree, &lambdas, self.params.n_perm, self.params.seed).map(Some)
    }

    pub fn rank(&self) -> Result<()> {
        let maps = self.maps()?;
        let voxels = self.lambdas(LAMBDA_VOXELS)?;
        let report = rank_stage(&maps, &voxels, &self.rois()?, &self.params)?;
        self.store.write_csv("hierarchy_scatter.csv", &report.scatter_csv())?;
        self.store.write_json(HIERARCHY, &report)?;
        if let Some(dl) = self.degree_lambda()? {
            self.store.write_json("degree_lambda.json", &dl)?;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<()> {
        let hierarchy: HierarchyReport = match self.store.read_fresh_json(HIERARCHY)? {
            Some(h) => h,
            None => {
                self.rank()?;
                self.store.read_fresh_json(HIERARCHY)?.ok_or_else(|| missing(HIERARCHY))?
            }
        };
        let maps = self.maps()?;
        let partition = self.partition_for(self.features()?.0.cols())?;
        let report = Report {
            partition,
            maps,
            hierarchy,
            degree_lambda: self.degree_lambda()?,
        };
        self.store.write_json("report.json", &report)
    }
}
