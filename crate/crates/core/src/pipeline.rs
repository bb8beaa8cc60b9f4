//! The end-to-end protocol: load → drop outliers → split → normalize →
//! importance → correlations → filter rankings → forward selection →
//! test evaluation, with every artifact written to one directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cart::{export_dot, GrowParams};
use crate::dataio::{self, Column, Dataset, NormStats, SplitIndices};
use crate::forest::{fit_forest, permutation_importance, ForestParams, ImportanceReport};
use crate::importance::{self, CorrelationMatrix, FeatureRanking};
use crate::metrics::{CorrDisplay, MetricsRow};
use crate::selection::{self, Model, ModelFamily, ModelSpec, SelectionReport};
use crate::synth::{self, GeneratorConfig};
use crate::{format_features, seeds, Error, FeatureId, Result};

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Csv(PathBuf),
    /// The generator's own `seed` is replaced by one derived from the
    /// master seed.
    Synthetic(GeneratorConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source: Source,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub cp: f64,
    pub bins: usize,
    pub top_k: usize,
    pub families: Vec<ModelFamily>,
}

impl PipelineConfig {
    pub fn synthetic(out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            source: Source::Synthetic(GeneratorConfig::default()),
            out_dir: out_dir.into(),
            seed,
            n_trees: 100,
            mtry: None,
            cp: GrowParams::default().cp,
            bins: importance::DEFAULT_BINS,
            top_k: 3,
            families: ModelFamily::ALL.to_vec(),
        }
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::derive(self.seed)
    }

    pub fn spec(&self, family: ModelFamily) -> ModelSpec {
        match family {
            ModelFamily::Linear => ModelSpec::Linear,
            ModelFamily::Tree => ModelSpec::Tree {
                params: GrowParams {
                    cp: self.cp,
                    ..GrowParams::default()
                },
            },
            ModelFamily::Forest => ModelSpec::Forest {
                params: self.forest_params(),
            },
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            mtry: self.mtry,
            bootstrap: true,
            seed: self.seeds().forest,
        }
    }
}

/// Per-stage seeds derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub generator: u64,
    pub split: u64,
    pub forest: u64,
    pub permutation: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        Self {
            master,
            generator: seeds::derive(master, &[seeds::tag::GENERATOR]),
            split: seeds::derive(master, &[seeds::tag::SPLIT]),
            forest: seeds::derive(master, &[seeds::tag::FOREST]),
            permutation: seeds::derive(master, &[seeds::tag::PERMUTATION]),
        }
    }
}

/// Data ready for modelling: outliers removed, split, and normalized with
/// training-row statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub stats: NormStats,
    pub split: SplitIndices,
    pub rows_loaded: usize,
    pub outliers_removed: usize,
    pub degenerate: Vec<Column>,
}

pub fn load_source(source: &Source, seeds: &StageSeeds) -> Result<Dataset> {
    match source {
        Source::Csv(path) => dataio::load_csv(path),
        Source::Synthetic(cfg) => synth::generate(&GeneratorConfig {
            seed: seeds.generator,
            ..cfg.clone()
        }),
    }
}

/// Runs the shared preparation stages, reporting the failing stage.
pub fn prepare(raw: &Dataset, split_seed: u64) -> std::result::Result<Prepared, (Stage, Error)> {
    let clean = dataio::drop_flagged_outliers(raw).map_err(|e| (Stage::Outliers, e))?;
    let split = dataio::split_dataset(clean.n_rows(), split_seed).map_err(|e| (Stage::Split, e))?;
    let stats = dataio::zscore_fit(&clean, &split.train).map_err(|e| (Stage::Normalize, e))?;
    let normalized = dataio::zscore_apply(&clean, &stats);
    Ok(Prepared {
        data: normalized.data,
        stats,
        split,
        rows_loaded: raw.n_rows(),
        outliers_removed: raw.n_rows() - clean.n_rows(),
        degenerate: normalized.degenerate,
    })
}

/// Forest permutation importance on the training rows, all features.
pub fn rf_importance(prep: &Prepared, params: &ForestParams, perm_seed: u64) -> Result<ImportanceReport> {
    let (x, y) = prep.data.design(&FeatureId::ALL, &prep.split.train)?;
    let forest = fit_forest(&x, &y, params)?;
    permutation_importance(&forest, &x, &y, perm_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Outliers,
    Split,
    Normalize,
    Importance,
    Correlation,
    Filters,
    Selection,
    Evaluation,
    Export,
}

/// One row of `test_results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub family: ModelFamily,
    /// `top<k>` or `all`.
    pub subset: String,
    pub features: Vec<FeatureId>,
    pub metrics: MetricsRow,
}

pub fn test_results_csv(results: &[TestResult]) -> String {
    let mut out = String::from("family,subset,rmse,mae,corr,features\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{:.5},{:.5},{},\"{}\"\n",
            r.family,
            r.subset,
            r.metrics.rmse,
            r.metrics.mae,
            CorrDisplay(r.metrics.corr),
            format_features(&r.features)
        ));
    }
    out
}

/// Two-column CSV of normalized permutation importance in ranking order.
pub fn importance_csv(report: &ImportanceReport) -> String {
    let mut out = String::from("feature,normalized\n");
    for f in &report.ranking {
        let score = report.get(*f).map_or(0.0, |i| i.normalized);
        out.push_str(&format!("{f},{score:.5}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seeds: StageSeeds,
    pub config: PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows_loaded: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outliers_removed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_sizes: Option<[usize; 3]>,
    pub degenerate_columns: Vec<Column>,
    pub undefined_correlations: Vec<(Column, Column)>,
    pub files: Vec<String>,
}

/// Everything the pipeline computed.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub manifest: Manifest,
    pub importance: ImportanceReport,
    pub correlations: CorrelationMatrix,
    pub rankings: Vec<FeatureRanking>,
    pub selection: Vec<SelectionReport>,
    pub tests: Vec<TestResult>,
    pub tree: Option<Model>,
}

/// Pipeline failure: the stage, the error, and the manifest written for it.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub error: Error,
    pub manifest: Box<Manifest>,
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for PipelineError {}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
        self.write(name, text + "\n")
    }
}

pub const MANIFEST: &str = "manifest.json";

/// Runs every stage and writes the artifacts into `config.out_dir`. On
/// failure, files written so far are kept and the manifest names the stage.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<PipelineOutput, PipelineError> {
    let seeds = config.seeds();
    let mut manifest = Manifest {
        status: "running".into(),
        failed_stage: None,
        error: None,
        seeds,
        config: config.clone(),
        rows_loaded: None,
        outliers_removed: None,
        split_sizes: None,
        degenerate_columns: Vec::new(),
        undefined_correlations: Vec::new(),
        files: Vec::new(),
    };
    let mut writer = Writer {
        dir: config.out_dir.clone(),
        files: Vec::new(),
    };
    let result = run_stages(config, &seeds, &mut writer, &mut manifest);
    manifest.files = writer.files.clone();
    manifest.files.push(MANIFEST.into());
    match result {
        Ok(mut out) => {
            manifest.status = "ok".into();
            writer
                .json(MANIFEST, &manifest)
                .map_err(|e| fail(Stage::Export, e, &manifest))?;
            out.manifest = manifest;
            Ok(out)
        }
        Err((stage, error)) => {
            manifest.status = "failed".into();
            manifest.failed_stage = Some(stage);
            manifest.error = Some(error.to_string());
            // Best effort: the directory itself may be the problem.
            let _ = writer.json(MANIFEST, &manifest);
            Err(PipelineError {
                stage,
                error,
                manifest: Box::new(manifest),
            })
        }
    }
}

fn fail(stage: Stage, error: Error, manifest: &Manifest) -> PipelineError {
    PipelineError {
        stage,
        error,
        manifest: Box::new(manifest.clone()),
    }
}

fn run_stages(
    config: &PipelineConfig,
    seeds: &StageSeeds,
    writer: &mut Writer,
    manifest: &mut Manifest,
) -> std::result::Result<PipelineOutput, (Stage, Error)> {
    let at = |stage: Stage| move |e: Error| (stage, e);
    fs::create_dir_all(&config.out_dir).map_err(|e| (Stage::Export, Error::io(&config.out_dir, e)))?;
    if config.top_k == 0 || config.families.is_empty() {
        return Err((
            Stage::Load,
            Error::InvalidParams("top_k and the family list must be non-empty".into()),
        ));
    }

    let raw = load_source(&config.source, seeds).map_err(at(Stage::Load))?;
    manifest.rows_loaded = Some(raw.n_rows());
    let prep = prepare(&raw, seeds.split)?;
    manifest.outliers_removed = Some(prep.outliers_removed);
    manifest.split_sizes = Some([prep.split.train.len(), prep.split.validation.len(), prep.split.test.len()]);
    manifest.degenerate_columns = prep.degenerate.clone();

    let imp = rf_importance(&prep, &config.forest_params(), seeds.permutation).map_err(at(Stage::Importance))?;
    writer.write("importance.csv", importance_csv(&imp)).map_err(at(Stage::Export))?;
    writer.json("importance.json", &imp).map_err(at(Stage::Export))?;

    let corr = importance::correlation_matrix(&prep.data).map_err(at(Stage::Correlation))?;
    manifest.undefined_correlations = corr.undefined.clone();
    writer.write("corrmatrix.csv", corr.to_csv()).map_err(at(Stage::Export))?;

    let rf_ranking = FeatureRanking::from(&imp);
    let mut rankings = importance::filter_rankings(&prep.data, &prep.split.train, config.bins)
        .map_err(at(Stage::Filters))?;
    rankings.push(rf_ranking.clone());
    writer.write("rankings.csv", importance::rankings_csv(&rankings)).map_err(at(Stage::Export))?;

    let mut reports = Vec::new();
    for &family in &config.families {
        let spec = config.spec(family);
        let report = selection::forward_selection(&prep.data, &prep.split, &rf_ranking, &spec)
            .map_err(at(Stage::Selection))?;
        writer
            .write(&format!("selection_{family}.csv"), report.to_csv())
            .map_err(at(Stage::Export))?;
        writer
            .json(&format!("selection_{family}.json"), &report)
            .map_err(at(Stage::Export))?;
        reports.push(report);
    }

    let top = rf_ranking.top(config.top_k);
    let mut tests = Vec::new();
    let mut tree = None;
    for &family in &config.families {
        let spec = config.spec(family);
        for (subset, features) in [(format!("top{}", top.len()), top.clone()), ("all".to_string(), FeatureId::ALL.to_vec())] {
            let model = selection::fit_on_train(&prep.data, &prep.split, &features, &spec)
                .map_err(at(Stage::Evaluation))?;
            let (x, y) = prep.data.design(&features, &prep.split.test).map_err(at(Stage::Evaluation))?;
            let pred = model.predict(&x).map_err(at(Stage::Evaluation))?;
            let metrics = MetricsRow::compute(&y, &pred).map_err(at(Stage::Evaluation))?;
            tests.push(TestResult { family, subset: subset.clone(), features, metrics });
            if family == ModelFamily::Tree && subset == "all" {
                tree = Some(model);
            }
        }
    }
    writer.write("test_results.csv", test_results_csv(&tests)).map_err(at(Stage::Export))?;

    // The pruned tree on every feature, for inspection.
    let tree = match tree {
        Some(t) => t,
        None => selection::fit_on_train(&prep.data, &prep.split, &FeatureId::ALL, &config.spec(ModelFamily::Tree))
            .map_err(at(Stage::Evaluation))?,
    };
    if let Model::Tree(t) = &tree {
        writer.write("tree.dot", export_dot(t)).map_err(at(Stage::Export))?;
    }

    Ok(PipelineOutput {
        manifest: manifest.clone(),
        importance: imp,
        correlations: corr,
        rankings,
        selection: reports,
        tests,
        tree: Some(tree),
    })
}

/// Reads a manifest written by [`run_pipeline`].
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))
}
