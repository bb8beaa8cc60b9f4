//! `softsense` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 model error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softsense::bundle::{load_model, save_model, ModelBundle};
use softsense::cart::export_dot;
use softsense::dataio::{self, load_feature_table};
use softsense::importance::{self, FeatureRanking, RankingMethod};
use softsense::pipeline::{
    self, importance_csv, load_source, prepare, rf_importance, test_results_csv, PipelineConfig, Prepared,
    Source, StageSeeds, TestResult,
};
use softsense::selection::{self, Model, ModelFamily, PrefixModels};
use softsense::synth::{self, GeneratorConfig};
use softsense::{format_features, parse_feature_list, Error, FeatureId};

#[derive(Parser)]
#[command(name = "softsense", version, about = "Soft-sensor modelling of a process quality value from eight process variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (data.csv).
    Gen(GenArgs),
    /// Forest permutation importance, filter rankings and correlations.
    Importance {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Forward selection over the importance ranking.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Model families, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        family: Vec<ModelFamily>,
        /// Use this ranking instead of computing forest importance.
        #[arg(long, value_parser = parse_features)]
        ranking: Option<FeatureList>,
    },
    /// Test-set evaluation with the top-k features; saves a model bundle.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "forest")]
        family: ModelFamily,
        /// Use this ranking instead of computing forest importance.
        #[arg(long, value_parser = parse_features)]
        ranking: Option<FeatureList>,
    },
    /// Predict NT for every row of a CSV with a saved model bundle.
    Predict(PredictArgs),
    /// Write the pruned regression tree on all features as DOT.
    ExportTree {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run the full protocol and write every report.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Model families, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        family: Vec<ModelFamily>,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Generator configuration (JSON); defaults apply to omitted fields.
    #[arg(long)]
    gen_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV (A..H, NT, optional OUTLIER). Synthetic data when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator configuration (JSON) used when --input is absent.
    #[arg(long)]
    gen_config: Option<PathBuf>,
    /// Master seed; every stage seed derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Trees per forest.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Features tried per split (default: max(1, p/3)).
    #[arg(long)]
    mtry: Option<usize>,
    /// Complexity parameter for pruning the single tree.
    #[arg(long, default_value_t = 0.01)]
    cp: f64,
    /// Equal-frequency bins for the chi-squared and gain-ratio filters.
    #[arg(long, default_value_t = importance::DEFAULT_BINS)]
    bins: usize,
    /// Number of top-ranked features for test evaluation.
    #[arg(long, default_value_t = 3)]
    top_k: usize,
}

#[derive(Args)]
struct PredictArgs {
    /// Bundle written by `evaluate`.
    #[arg(long)]
    model: PathBuf,
    /// CSV with any subset of the A..H columns.
    #[arg(long)]
    input: PathBuf,
    /// Features treated as available, comma separated; "" for none.
    /// Default: every feature column in the input.
    #[arg(long, value_parser = parse_mask)]
    mask: Option<FeatureList>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// A comma-separated feature list taken as a single argument value.
#[derive(Debug, Clone)]
struct FeatureList(Vec<FeatureId>);

fn parse_features(s: &str) -> std::result::Result<FeatureList, String> {
    parse_feature_list(s).map(FeatureList).map_err(|e| e.to_string())
}

fn parse_mask(s: &str) -> std::result::Result<FeatureList, String> {
    if s.trim().is_empty() {
        return Ok(FeatureList(Vec::new()));
    }
    parse_features(s)
}

fn exit_code(e: &Error) -> u8 {
    if matches!(e, Error::InvalidParams(_)) {
        2
    } else if e.is_data_error() {
        3
    } else {
        4
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

type Result<T> = softsense::Result<T>;

impl DataArgs {
    fn source(&self) -> Result<Source> {
        Ok(match (&self.input, &self.gen_config) {
            (Some(path), _) => Source::Csv(path.clone()),
            (None, Some(cfg)) => Source::Synthetic(GeneratorConfig::load(cfg)?),
            (None, None) => Source::Synthetic(GeneratorConfig::default()),
        })
    }
}

fn config(data: &DataArgs, model: &ModelArgs, families: &[ModelFamily]) -> Result<PipelineConfig> {
    if model.top_k == 0 {
        return Err(Error::InvalidParams("--top-k must be at least 1".into()));
    }
    if model.cp.is_nan() || model.cp < 0.0 || model.bins < 2 || model.trees == 0 {
        return Err(Error::InvalidParams("need --cp >= 0, --bins >= 2 and --trees >= 1".into()));
    }
    if matches!(model.mtry, Some(m) if m == 0 || m > FeatureId::COUNT) {
        return Err(Error::InvalidParams(format!("--mtry must be in 1..={}", FeatureId::COUNT)));
    }
    Ok(PipelineConfig {
        source: data.source()?,
        out_dir: data.out_dir.clone(),
        seed: data.seed,
        n_trees: model.trees,
        mtry: model.mtry,
        cp: model.cp,
        bins: model.bins,
        top_k: model.top_k,
        families: if families.is_empty() {
            ModelFamily::ALL.to_vec()
        } else {
            families.to_vec()
        },
    })
}

fn load_prepared(cfg: &PipelineConfig) -> Result<Prepared> {
    let seeds = cfg.seeds();
    let raw = load_source(&cfg.source, &seeds)?;
    prepare(&raw, seeds.split).map_err(|(_, e)| e)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn json(value: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Serialization(e.to_string()))
}

fn ranking_for(cfg: &PipelineConfig, prep: &Prepared, given: &Option<FeatureList>) -> Result<FeatureRanking> {
    match given {
        Some(FeatureList(order)) => FeatureRanking::from_order(RankingMethod::RfPermutation, order),
        None => {
            let report = rf_importance(prep, &cfg.forest_params(), cfg.seeds().permutation)?;
            Ok(FeatureRanking::from(&report))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => {
            let base = match &args.gen_config {
                Some(path) => GeneratorConfig::load(path)?,
                None => GeneratorConfig::default(),
            };
            let cfg = GeneratorConfig {
                seed: StageSeeds::derive(args.seed).generator,
                ..base
            };
            let data = synth::generate(&cfg)?;
            std::fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
            let path = args.out_dir.join("data.csv");
            dataio::write_csv(&data, &path)?;
            println!("wrote {} ({} rows, {} flagged)", path.display(), data.n_rows(), data.n_flagged());
            write(&args.out_dir, "gen_config.json", json(&cfg)?)?;
        }
        Command::Importance { data, model } => {
            let cfg = config(&data, &model, &[])?;
            let prep = load_prepared(&cfg)?;
            let report = rf_importance(&prep, &cfg.forest_params(), cfg.seeds().permutation)?;
            write(&cfg.out_dir, "importance.csv", importance_csv(&report))?;
            write(&cfg.out_dir, "importance.json", json(&report)?)?;
            let mut rankings = importance::filter_rankings(&prep.data, &prep.split.train, cfg.bins)?;
            rankings.push(FeatureRanking::from(&report));
            write(&cfg.out_dir, "rankings.csv", importance::rankings_csv(&rankings))?;
            let corr = importance::correlation_matrix(&prep.data)?;
            write(&cfg.out_dir, "corrmatrix.csv", corr.to_csv())?;
            println!("ranking: {}", format_features(&report.ranking));
        }
        Command::Select { data, model, family, ranking } => {
            let cfg = config(&data, &model, &family)?;
            let prep = load_prepared(&cfg)?;
            let ranking = ranking_for(&cfg, &prep, &ranking)?;
            for &fam in &cfg.families {
                let report = selection::forward_selection(&prep.data, &prep.split, &ranking, &cfg.spec(fam))?;
                write(&cfg.out_dir, &format!("selection_{fam}.csv"), report.to_csv())?;
                write(&cfg.out_dir, &format!("selection_{fam}.json"), json(&report)?)?;
            }
        }
        Command::Evaluate { data, model, family, ranking } => {
            let cfg = config(&data, &model, &[family])?;
            let prep = load_prepared(&cfg)?;
            let ranking = ranking_for(&cfg, &prep, &ranking)?.features();
            let spec = cfg.spec(family);
            let models = PrefixModels::fit(&prep.data, &prep.split.train, &ranking, cfg.top_k, &spec)?;
            let mut results = Vec::new();
            let top = models.ranking.clone();
            let all_model = selection::fit_on_train(&prep.data, &prep.split, &FeatureId::ALL, &spec)?;
            for (subset, m) in [(format!("top{}", top.len()), models.full()), ("all".to_string(), &all_model)] {
                let (x, y) = prep.data.design(m.features(), &prep.split.test)?;
                let metrics = softsense::metrics::MetricsRow::compute(&y, &m.predict(&x)?)?;
                results.push(TestResult {
                    family,
                    subset,
                    features: m.features().to_vec(),
                    metrics,
                });
            }
            write(&cfg.out_dir, &format!("test_results_{family}.csv"), test_results_csv(&results))?;
            let bundle = ModelBundle {
                spec,
                features: top,
                normalization: prep.stats.clone(),
                models,
            };
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_error(&cfg.out_dir, e))?;
            let path = cfg.out_dir.join(format!("model_{family}.json"));
            save_model(&bundle, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Predict(args) => {
            let bundle = load_model(&args.model)?;
            let table = load_feature_table(&args.input)?;
            let available: Vec<FeatureId> = match &args.mask {
                Some(FeatureList(mask)) => mask.iter().copied().filter(|f| table.present.contains(f)).collect(),
                None => table.present.clone(),
            };
            let mut out = String::from("row,prediction,subset\n");
            for (i, row) in table.rows.iter().enumerate() {
                let (pred, used) = bundle.predict(row, &available)?;
                out.push_str(&format!("{i},{pred},\"{}\"\n", format_features(&used)));
            }
            write(&args.out_dir, "predictions.csv", out)?;
        }
        Command::ExportTree { data, model } => {
            let cfg = config(&data, &model, &[ModelFamily::Tree])?;
            let prep = load_prepared(&cfg)?;
            let m = selection::fit_on_train(&prep.data, &prep.split, &FeatureId::ALL, &cfg.spec(ModelFamily::Tree))?;
            if let Model::Tree(tree) = &m {
                write(&cfg.out_dir, "tree.dot", export_dot(tree))?;
                let used: Vec<FeatureId> = tree.used_features().into_iter().collect();
                println!("features used: {}", format_features(&used));
            }
        }
        Command::Run { data, model, family } => {
            let cfg = config(&data, &model, &family)?;
            match pipeline::run_pipeline(&cfg) {
                Ok(out) => {
                    for f in &out.manifest.files {
                        println!("wrote {}", cfg.out_dir.join(f).display());
                    }
                }
                Err(e) => {
                    eprintln!("pipeline failed at stage {:?}", e.stage);
                    return Err(e.error);
                }
            }
        }
    }
    Ok(())
}
