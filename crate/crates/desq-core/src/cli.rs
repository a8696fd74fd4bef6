//! Command-line interface: train, predict, retrain, bench, weights, costmodel.
//!
//! A model artifact is a directory holding four tabular dumps: `tree.tsv`,
//! `forest.tsv`, `standardizer.tsv`, `ledger.tsv`. Flags may be sourced from
//! a `key = value` config file (`--config`); explicit flags win. The seed
//! falls back to the `DESQ_SEED` environment variable.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::baseline;
use crate::bench::{
    load_paper_datasets, paper_cells, run_benchmark, run_cost_model, smoke_cells, smoke_datasets,
    write_paper_tables, CostModelConfig, SuiteConfig,
};
use crate::cluster::{AssignmentRule, ClusterConfig, InitMethod};
use crate::dataset::{load_csv, Dataset, Standardizer, TaskKind};
use crate::error::{Error, Result};
use crate::kptree::KpForest;
use crate::qestimate::{EstimationMethod, EstimatorConfig, QueryLedger};
use crate::tree::{fit, retrain, DesqTree, Weighting};
use crate::weights::{compute_weights, pearson_quantum, FeatureWeights};

#[derive(Debug, Parser)]
#[command(
    name = "desq",
    about = "Feature-weighted supervised k-means decision trees with fast retraining",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tree on a CSV file and write a model directory.
    Train(TrainArgs),
    /// Predict labels for a feature-only CSV with a trained model.
    Predict(PredictArgs),
    /// Append a labeled batch to a model and rebuild it.
    Retrain(RetrainArgs),
    /// Run the benchmark harness and emit the result tables.
    Bench(BenchArgs),
    /// Report per-feature correlation weights.
    Weights(WeightsArgs),
    /// Run the retraining cost-model scenario and print its ledger report.
    Costmodel(CostArgs),
}

/// Options shared by every estimator-driven command.
#[derive(Debug, Args, Clone)]
pub struct EstimatorArgs {
    /// Estimation method: exact | chernoff | ae
    #[arg(long)]
    pub method: Option<String>,
    /// Inner-product / assignment tolerance ε₁
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Centroid-coordinate tolerance ε₂
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Leaf-label tolerance ε₃
    #[arg(long)]
    pub eps3: Option<f64>,
    /// Majority-boost failure probability Δ
    #[arg(long)]
    pub delta: Option<f64>,
    /// δ-k-means assignment relaxation
    #[arg(long)]
    pub delta_kmeans: Option<f64>,
    /// RNG seed (falls back to DESQ_SEED, then 1)
    #[arg(long)]
    pub seed: Option<u64>,
    /// key = value file supplying any of the long options
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV (header row; label column included)
    #[arg(long)]
    pub data: PathBuf,
    /// Task: classify | regress
    #[arg(long)]
    pub task: String,
    /// Label column name (default: last column)
    #[arg(long)]
    pub label_column: Option<String>,
    /// Tree depth D
    #[arg(long)]
    pub depth: Option<usize>,
    /// Clusters per split k
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Clustering iteration cap K
    #[arg(long)]
    pub iters: Option<usize>,
    /// Centroid-movement convergence threshold
    #[arg(long)]
    pub tol: Option<f64>,
    /// Assignment rule: distance | inner-product
    #[arg(long)]
    pub rule: Option<String>,
    /// Empty-cluster policy: repair | drop
    #[arg(long)]
    pub empty_policy: Option<String>,
    /// Split nodes smaller than k (clamping k) instead of stopping
    #[arg(long)]
    pub split_undersized: bool,
    /// Disable correlation weighting (uniform weights ablation)
    #[arg(long)]
    pub no_weight: bool,
    /// Output model directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model directory produced by train/retrain
    #[arg(long)]
    pub model: PathBuf,
    /// Feature-only CSV (header row)
    #[arg(long)]
    pub data: PathBuf,
    /// Output predictions CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrainArgs {
    /// Model directory to update
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled batch CSV (same schema as the training file)
    #[arg(long)]
    pub batch: PathBuf,
    /// Label column name (default: last column)
    #[arg(long)]
    pub label_column: Option<String>,
    /// Output directory (default: update the model in place)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Suite to run: paper | smoke
    #[arg(long, default_value = "paper")]
    pub suite: String,
    /// Directory with the vendored benchmark CSVs
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    /// Directory for the emitted tables
    #[arg(long, default_value = "bench_out")]
    pub out_dir: PathBuf,
    /// Suite seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap rayon worker threads
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// CSV with features and label
    #[arg(long)]
    pub data: PathBuf,
    /// Task: classify | regress
    #[arg(long)]
    pub task: String,
    /// Label column name (default: last column)
    #[arg(long)]
    pub label_column: Option<String>,
    /// Diagnostic: use the literal (2 − 1/N) numerator form
    #[arg(long)]
    pub literal_numerator: bool,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Initial row count N
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Appended row count N_new
    #[arg(long, default_value_t = 16)]
    pub n_new: usize,
    /// Feature count d
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    /// Clusters per split
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    /// Tree depth
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Estimator tolerance
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `key = value` lines; '#' starts a comment.
fn read_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut map = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected key = value",
                path.display(),
                no + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn config_get<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("config key {key} has invalid value {raw:?}"))),
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("DESQ_SEED").ok().and_then(|v| v.parse().ok())
}

/// Resolve the estimator configuration with precedence flag > config file >
/// environment (seed only) > default.
fn resolve_estimator(args: &EstimatorArgs) -> Result<EstimatorConfig> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    let method_name: Option<String> = args
        .method
        .clone()
        .or(config_get(&file, "method")?);
    let method = match method_name.as_deref() {
        None | Some("exact") => EstimationMethod::Exact,
        Some("chernoff") => EstimationMethod::Chernoff,
        Some("ae") | Some("amplitude-estimation") => EstimationMethod::AmplitudeEstimation,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown method {other:?} (want exact | chernoff | ae)"
            )))
        }
    };
    let defaults = EstimatorConfig::default();
    let cfg = EstimatorConfig {
        eps1: args.eps1.or(config_get(&file, "eps1")?).unwrap_or(defaults.eps1),
        eps2: args.eps2.or(config_get(&file, "eps2")?).unwrap_or(defaults.eps2),
        eps3: args.eps3.or(config_get(&file, "eps3")?).unwrap_or(defaults.eps3),
        delta_cap: args
            .delta
            .or(config_get(&file, "delta")?)
            .unwrap_or(defaults.delta_cap),
        delta_kmeans: args
            .delta_kmeans
            .or(config_get(&file, "delta_kmeans")?)
            .unwrap_or(defaults.delta_kmeans),
        method,
        seed: args
            .seed
            .or(config_get(&file, "seed")?)
            .or_else(env_seed)
            .unwrap_or(1),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_task(s: &str) -> Result<TaskKind> {
    TaskKind::parse(s)
        .ok_or_else(|| Error::Config(format!("unknown task {s:?} (want classify | regress)")))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loaded model artifact.
pub struct Model {
    pub tree: DesqTree,
    pub forest: KpForest,
    pub standardizer: Standardizer,
}

pub fn save_model(dir: &Path, tree: &DesqTree, forest: &KpForest, std: &Standardizer) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_file(&dir.join("tree.tsv"), &tree.dump())?;
    write_file(&dir.join("forest.tsv"), &forest.dump())?;
    write_file(&dir.join("standardizer.tsv"), &std.dump())?;
    write_file(&dir.join("ledger.tsv"), &forest.ledger().report())?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<Model> {
    let tree = DesqTree::parse(&read_file(&dir.join("tree.tsv"))?)?;
    let forest = KpForest::parse(
        &read_file(&dir.join("forest.tsv"))?,
        Arc::new(QueryLedger::new()),
    )?;
    let standardizer = Standardizer::parse(&read_file(&dir.join("standardizer.tsv"))?)?;
    Ok(Model {
        tree,
        forest,
        standardizer,
    })
}

fn resolve_cluster_config(args: &TrainArgs, est: EstimatorConfig) -> Result<ClusterConfig> {
    let file = match &args.estimator.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    let rule_name: Option<String> = args.rule.clone().or(config_get(&file, "rule")?);
    let rule = match rule_name.as_deref() {
        None => AssignmentRule::MinWeightedDistance,
        Some(name) => AssignmentRule::parse(name)
            .ok_or_else(|| Error::Config(format!("unknown rule {name:?}")))?,
    };
    let policy_name: Option<String> = args.empty_policy.clone().or(config_get(&file, "empty_policy")?);
    let empty_policy = match policy_name.as_deref() {
        None => EmptyClusterPolicy::Repair,
        Some(name) => EmptyClusterPolicy::parse(name)
            .ok_or_else(|| Error::Config(format!("unknown empty policy {name:?}")))?,
    };
    Ok(ClusterConfig {
        k: args.clusters.or(config_get(&file, "clusters")?).unwrap_or(3),
        max_iters: args.iters.or(config_get(&file, "iters")?).unwrap_or(100),
        tol: args.tol.or(config_get(&file, "tol")?).unwrap_or(1e-4),
        assignment_rule: rule,
        init: InitMethod::KMeansPlusPlus,
        empty_policy,
        split_undersized: args.split_undersized
            || config_get(&file, "split_undersized")?.unwrap_or(false),
        estimator: est,
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let task = parse_task(&args.task)?;
    let est = resolve_estimator(&args.estimator)?;
    let cc = resolve_cluster_config(args, est)?;
    let file = match &args.estimator.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    let depth = args.depth.or(config_get(&file, "depth")?).unwrap_or(2);
    let raw = load_csv(&args.data, task, args.label_column.as_deref())?;
    let all: Vec<usize> = (0..raw.n_rows()).collect();
    let std = Standardizer::fit(&raw, &all)?;
    let ds = std.apply(&raw)?;
    let forest = KpForest::build(&ds, Arc::new(QueryLedger::new()));
    let weighting = if args.no_weight {
        Weighting::Uniform
    } else {
        Weighting::Correlation
    };
    let tree = fit(&ds, &forest, &cc, depth, weighting)?;
    save_model(&args.out, &tree, &forest, &std)?;
    println!(
        "trained {} tree: {} nodes, depth {}, model written to {}",
        task.name(),
        tree.size(),
        tree.max_depth(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let d = model.standardizer.means.len();
    let text = read_file(&args.data)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty input", args.data.display())))?;
    let cols = header.split(',').count();
    if cols != d {
        return Err(Error::Dimension {
            expected: d,
            got: cols,
        });
    }
    let mut out = String::from("prediction\n");
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse().map_err(|_| Error::Parse {
                    path: args.data.display().to_string(),
                    line: no + 2,
                    msg: format!("non-numeric cell {cell:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(Error::Parse {
                path: args.data.display().to_string(),
                line: no + 2,
                msg: format!("expected {d} cells, got {}", row.len()),
            });
        }
        let scaled = model.tree.predict(&model.standardizer.apply_row(&row))?;
        let label = model.standardizer.invert_label(scaled);
        out.push_str(&format!("{label}\n"));
    }
    write_file(&args.out, &out)?;
    println!("predictions written to {}", args.out.display());
    Ok(())
}

pub fn cmd_retrain(args: &RetrainArgs) -> Result<()> {
    let mut model = load_model(&args.model)?;
    let batch_raw = load_csv(&args.batch, model.tree.task, args.label_column.as_deref())?;
    let batch = model.standardizer.apply(&batch_raw)?;
    let cc = model.tree.config.clone();
    let depth = model.tree.depth_cap;
    let tree = retrain(&model.tree, &mut model.forest, &batch, &cc, depth)?;
    let out = args.out.as_ref().unwrap_or(&args.model);
    save_model(out, &tree, &model.forest, &model.standardizer)?;
    println!(
        "retrained over {} total rows ({} appended), model written to {}",
        model.forest.n_rows(),
        batch.n_rows(),
        out.display()
    );
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if let Some(threads) = args.threads {
        // ignore failure when a pool already exists (tests, repeat calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let seed = args.seed.or_else(env_seed).unwrap_or(1);
    let cfg = SuiteConfig {
        seed,
        ..SuiteConfig::default()
    };
    let (datasets, cells) = match args.suite.as_str() {
        "paper" => (load_paper_datasets(&args.data_dir)?, paper_cells()),
        "smoke" => (smoke_datasets(seed)?, smoke_cells()),
        other => {
            return Err(Error::Config(format!(
                "unknown suite {other:?} (want paper | smoke)"
            )))
        }
    };
    let report = run_benchmark(&datasets, &cells, &cfg)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    write_file(&args.out_dir.join("results.tsv"), &report.table_text())?;
    write_file(&args.out_dir.join("impurity_series.tsv"), &report.series_text())?;
    if args.suite == "paper" {
        write_paper_tables(&report, &args.out_dir)?;
    }
    println!("{}", report.table_text());
    println!("tables written to {}", args.out_dir.display());
    Ok(())
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    let task = parse_task(&args.task)?;
    let est = resolve_estimator(&args.estimator)?;
    let raw = load_csv(&args.data, task, args.label_column.as_deref())?;
    let all: Vec<usize> = (0..raw.n_rows()).collect();
    let std = Standardizer::fit(&raw, &all)?;
    let ds = std.apply(&raw)?;
    let forest = KpForest::build(&ds, Arc::new(QueryLedger::new()));
    let weights: FeatureWeights = if args.literal_numerator {
        let mut raw_w = Vec::new();
        let mut per_feature = Vec::new();
        let mut label = Default::default();
        for j in 0..ds.n_cols() {
            let e = pearson_quantum(&forest, j, &est, true)?;
            raw_w.push(e.value);
            per_feature.push(e.stat);
            if e.label.norm > 0.0 {
                label = e.label;
            }
        }
        FeatureWeights {
            normalized: crate::weights::normalize_weights(&raw_w),
            raw: raw_w,
            per_feature,
            label,
        }
    } else {
        compute_weights(&forest, &ds, &est)?
    };
    let report = weights.report(ds.feature_names());
    match &args.out {
        Some(path) => {
            write_file(path, &report)?;
            println!("weights written to {}", path.display());
        }
        None => print!("{report}"),
    }
    Ok(())
}

pub fn cmd_costmodel(args: &CostArgs) -> Result<()> {
    let outcome = run_cost_model(&CostModelConfig {
        n: args.n,
        n_new: args.n_new,
        d: args.d,
        k: args.clusters,
        depth: args.depth,
        eps: args.eps,
        seed: args.seed.or_else(env_seed).unwrap_or(7),
    })?;
    let report = outcome.report();
    match &args.out {
        Some(path) => {
            write_file(path, &report)?;
            println!("cost report written to {}", path.display());
        }
        None => print!("{report}"),
    }
    Ok(())
}

/// Dispatch a parsed command; the caller maps errors to exit codes.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Retrain(args) => cmd_retrain(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Weights(args) => cmd_weights(&args),
        Command::Costmodel(args) => cmd_costmodel(&args),
    }
}

/// Baseline tree training helper used by the bench examples in tests.
pub fn train_baseline(ds: &Dataset, depth: usize) -> Result<baseline::AxisTree> {
    let idx: Vec<usize> = (0..ds.n_rows()).collect();
    baseline::fit_axis(ds, &idx, depth)
}
