//! Fold orchestration, metrics, table/series reproduction, cost reports.

use rayon::prelude::*;

use crate::baseline::fit_axis;
use crate::cluster::{AssignmentRule, ClusterConfig, EmptyClusterPolicy};
use crate::dataset::{make_folds, Dataset, Standardizer, TaskKind};
use crate::error::{Error, Result};
use crate::kptree::KpForest;
use crate::qestimate::{
    derive_seed, snapshot_report, EstimationMethod, EstimatorConfig, LedgerSnapshot, Phase,
    QueryLedger,
};
use crate::tree::{fit, retrain, Weighting};

use std::sync::Arc;

/// Classification accuracy in percent.
pub fn accuracy(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = y.iter().zip(y_hat).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / y.len() as f64)
}

/// Root mean square error √(1/N Σ(Yᵢ − Ŷᵢ)²).
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

fn group_by_leaf<F>(route: &F, ds: &Dataset, idx: &[usize]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<(f64, usize)>,
{
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &i in idx {
        let (_, leaf) = route(ds.row(i))?;
        if leaf >= groups.len() {
            groups.resize_with(leaf + 1, Vec::new);
        }
        groups[leaf].push(ds.label(i));
    }
    Ok(groups)
}

/// Tree entropy E_D = Σᵢ fᵢ·eᵢ over leaves, with fᵢ the fraction of `idx`
/// rows routed to leaf i and eᵢ the base-2 entropy of their labels.
pub fn tree_entropy<F>(route: F, ds: &Dataset, idx: &[usize]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, usize)>,
{
    if idx.is_empty() {
        return Err(Error::EmptyInput);
    }
    let groups = group_by_leaf(&route, ds, idx)?;
    let n = idx.len() as f64;
    let mut e = 0.0;
    for labels in &groups {
        if labels.is_empty() {
            continue;
        }
        let ones = labels.iter().filter(|&&v| v == 1.0).count();
        e += (labels.len() as f64 / n)
            * crate::baseline::binary_entropy(ones, labels.len());
    }
    Ok(e)
}

/// Tree variance V_D = Σᵢ fᵢ·Var(labels at leaf i), population variance.
pub fn tree_variance<F>(route: F, ds: &Dataset, idx: &[usize]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, usize)>,
{
    if idx.is_empty() {
        return Err(Error::EmptyInput);
    }
    let groups = group_by_leaf(&route, ds, idx)?;
    let n = idx.len() as f64;
    let mut v = 0.0;
    for labels in &groups {
        if labels.is_empty() {
            continue;
        }
        let m = labels.len() as f64;
        let mean: f64 = labels.iter().sum::<f64>() / m;
        let var: f64 = labels.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / m;
        v += (m / n) * var;
    }
    Ok(v)
}

/// Spearman rank correlation (values assumed tie-free in rank order).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).expect("finite values"));
        let mut ranks = vec![0.0; vals.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let mean = (n as f64 - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        vx += (a - mean) * (a - mean);
        vy += (b - mean) * (b - mean);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Models the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    DesC,
    NoWeight,
    Baseline,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DesC => "des-c",
            ModelKind::NoWeight => "no-weight",
            ModelKind::Baseline => "baseline",
        }
    }
}

/// One (dataset, model, depth, k) grid point to evaluate. `k` is ignored by
/// the baseline (binary splits).
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub dataset: String,
    pub model: ModelKind,
    pub depth: usize,
    pub k: usize,
}

/// A dataset with the name used in reports.
pub struct NamedDataset {
    pub name: String,
    pub ds: Dataset,
}

/// Harness-wide settings; folds per task follow the measurement protocol
/// (ten resamples for classification, five for regression, 0.3 test).
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub folds_classification: usize,
    pub folds_regression: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub rule: AssignmentRule,
    pub empty_policy: EmptyClusterPolicy,
    pub split_undersized: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 1,
            test_fraction: 0.3,
            folds_classification: 10,
            folds_regression: 5,
            max_iters: 100,
            tol: 1e-4,
            rule: AssignmentRule::MinWeightedDistance,
            empty_policy: EmptyClusterPolicy::Repair,
            split_undersized: false,
        }
    }
}

/// Per-cell fold metrics plus aggregates.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub dataset: String,
    pub model: ModelKind,
    pub depth: usize,
    pub k: usize,
    pub train_metric: Vec<f64>,
    pub test_metric: Vec<f64>,
    pub tree_size: Vec<f64>,
    pub train_impurity: Vec<f64>,
    pub test_impurity: Vec<f64>,
    pub lloyd_violations: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

impl CellResult {
    pub fn test_mean(&self) -> f64 {
        mean(&self.test_metric)
    }

    pub fn test_std(&self) -> f64 {
        pop_std(&self.test_metric)
    }

    pub fn train_mean(&self) -> f64 {
        mean(&self.train_metric)
    }

    pub fn size_mean(&self) -> f64 {
        mean(&self.tree_size)
    }

    pub fn train_impurity_mean(&self) -> f64 {
        mean(&self.train_impurity)
    }

    pub fn test_impurity_mean(&self) -> f64 {
        mean(&self.test_impurity)
    }
}

/// Full harness output.
pub struct BenchReport {
    pub cells: Vec<CellResult>,
}

impl BenchReport {
    pub fn find(&self, dataset: &str, model: ModelKind, depth: usize, k: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.dataset == dataset && c.model == model && c.depth == depth && (c.k == k || model == ModelKind::Baseline)
        })
    }

    /// Main table: one row per cell with fold aggregates.
    pub fn table_text(&self) -> String {
        let mut out =
            String::from("dataset\tmodel\tdepth\tk\tmetric_mean\tmetric_std\ttree_size_mean\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                c.dataset,
                c.model.name(),
                c.depth,
                c.k,
                c.test_mean(),
                c.test_std(),
                c.size_mean()
            ));
        }
        out
    }

    /// Impurity series (entropy for classification, variance for regression)
    /// on training and test rows, the figure-series data.
    pub fn series_text(&self) -> String {
        let mut out = String::from(
            "dataset\tmodel\tdepth\tk\timpurity_train_mean\timpurity_train_std\timpurity_test_mean\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                c.dataset,
                c.model.name(),
                c.depth,
                c.k,
                c.train_impurity_mean(),
                pop_std(&c.train_impurity),
                c.test_impurity_mean()
            ));
        }
        out
    }
}

struct FoldOutcome {
    train_metric: f64,
    test_metric: f64,
    tree_size: f64,
    train_impurity: f64,
    test_impurity: f64,
    lloyd_violations: usize,
}

fn impurity_of<F>(task: TaskKind, route: F, ds: &Dataset, idx: &[usize]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, usize)>,
{
    match task {
        TaskKind::BinaryClassification => tree_entropy(route, ds, idx),
        TaskKind::Regression => tree_variance(route, ds, idx),
    }
}

fn eval_cell_on_fold(
    cell: &BenchCell,
    train_ds: &Dataset,
    test_ds: &Dataset,
    forest: &KpForest,
    cfg: &SuiteConfig,
    fold_seed: u64,
) -> Result<FoldOutcome> {
    let task = train_ds.task();
    let train_idx: Vec<usize> = (0..train_ds.n_rows()).collect();
    let test_idx: Vec<usize> = (0..test_ds.n_rows()).collect();
    let metric = |actual: &Dataset, predicted: &[f64]| -> Result<f64> {
        match task {
            TaskKind::BinaryClassification => accuracy(actual.labels(), predicted),
            TaskKind::Regression => rmse(actual.labels(), predicted),
        }
    };
    match cell.model {
        ModelKind::Baseline => {
            let tree = fit_axis(train_ds, &train_idx, cell.depth)?;
            let train_pred: Vec<f64> = train_idx
                .iter()
                .map(|&i| tree.predict(train_ds.row(i)))
                .collect::<Result<_>>()?;
            let test_pred: Vec<f64> = test_idx
                .iter()
                .map(|&i| tree.predict(test_ds.row(i)))
                .collect::<Result<_>>()?;
            Ok(FoldOutcome {
                train_metric: metric(train_ds, &train_pred)?,
                test_metric: metric(test_ds, &test_pred)?,
                tree_size: tree.size() as f64,
                train_impurity: impurity_of(task, |x| tree.route(x), train_ds, &train_idx)?,
                test_impurity: impurity_of(task, |x| tree.route(x), test_ds, &test_idx)?,
                lloyd_violations: 0,
            })
        }
        ModelKind::DesC | ModelKind::NoWeight => {
            let weighting = if cell.model == ModelKind::DesC {
                Weighting::Correlation
            } else {
                Weighting::Uniform
            };
            let cc = ClusterConfig {
                k: cell.k,
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                assignment_rule: cfg.rule,
                init: Default::default(),
                empty_policy: cfg.empty_policy,
                split_undersized: cfg.split_undersized,
                estimator: EstimatorConfig {
                    seed: fold_seed,
                    ..EstimatorConfig::default()
                },
            };
            let tree = fit(train_ds, forest, &cc, cell.depth, weighting)?;
            let train_pred: Vec<f64> = train_idx
                .iter()
                .map(|&i| tree.predict(train_ds.row(i)))
                .collect::<Result<_>>()?;
            let test_pred: Vec<f64> = test_idx
                .iter()
                .map(|&i| tree.predict(test_ds.row(i)))
                .collect::<Result<_>>()?;
            let route = |x: &[f64]| tree.route(x).map(|r| (r.label, r.leaf));
            Ok(FoldOutcome {
                train_metric: metric(train_ds, &train_pred)?,
                test_metric: metric(test_ds, &test_pred)?,
                tree_size: tree.size() as f64,
                train_impurity: impurity_of(task, route, train_ds, &train_idx)?,
                test_impurity: impurity_of(task, route, test_ds, &test_idx)?,
                lloyd_violations: tree.lloyd_violations,
            })
        }
    }
}

/// Train and evaluate every cell over seeded folds. Folds run in parallel;
/// the output is deterministic for a fixed suite seed.
pub fn run_benchmark(
    datasets: &[NamedDataset],
    cells: &[BenchCell],
    cfg: &SuiteConfig,
) -> Result<BenchReport> {
    let mut results = Vec::new();
    for (ds_idx, named) in datasets.iter().enumerate() {
        let my_cells: Vec<&BenchCell> = cells.iter().filter(|c| c.dataset == named.name).collect();
        if my_cells.is_empty() {
            continue;
        }
        let n_folds = match named.ds.task() {
            TaskKind::BinaryClassification => cfg.folds_classification,
            TaskKind::Regression => cfg.folds_regression,
        };
        let plan = make_folds(&named.ds, n_folds, cfg.test_fraction, cfg.seed)?;
        // per fold: standardize on train, build the forest once, run cells
        let fold_outcomes: Vec<Vec<FoldOutcome>> = plan
            .splits
            .par_iter()
            .enumerate()
            .map(|(fold, (train_idx, test_idx))| -> Result<Vec<FoldOutcome>> {
                let std = Standardizer::fit(&named.ds, train_idx)?;
                let train_ds = std.apply(&named.ds.subset(train_idx)?)?;
                let test_ds = std.apply(&named.ds.subset(test_idx)?)?;
                let forest = KpForest::build(&train_ds, Arc::new(QueryLedger::new()));
                let fold_seed = derive_seed(cfg.seed, &[ds_idx as u64, fold as u64]);
                my_cells
                    .iter()
                    .map(|cell| eval_cell_on_fold(cell, &train_ds, &test_ds, &forest, cfg, fold_seed))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (pos, cell) in my_cells.iter().enumerate() {
            let mut result = CellResult {
                dataset: cell.dataset.clone(),
                model: cell.model,
                depth: cell.depth,
                k: cell.k,
                train_metric: Vec::new(),
                test_metric: Vec::new(),
                tree_size: Vec::new(),
                train_impurity: Vec::new(),
                test_impurity: Vec::new(),
                lloyd_violations: 0,
            };
            for fold in &fold_outcomes {
                let o = &fold[pos];
                result.train_metric.push(o.train_metric);
                result.test_metric.push(o.test_metric);
                result.tree_size.push(o.tree_size);
                result.train_impurity.push(o.train_impurity);
                result.test_impurity.push(o.test_impurity);
                result.lloyd_violations += o.lloyd_violations;
            }
            results.push(result);
        }
    }
    Ok(BenchReport { cells: results })
}

/// Scenario for the retraining cost check: an initial build over `n` rows,
/// a retrain with `n_new` appended rows, and a fresh build over the combined
/// rows, all under the simulated estimator so state preparations count.
#[derive(Debug, Clone)]
pub struct CostModelConfig {
    pub n: usize,
    pub n_new: usize,
    pub d: usize,
    pub k: usize,
    pub depth: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        CostModelConfig {
            n: 1024,
            n_new: 16,
            d: 8,
            k: 2,
            depth: 1,
            eps: 0.05,
            seed: 7,
        }
    }
}

/// Outcome of the cost-model scenario.
pub struct CostModelOutcome {
    /// Ledger after initial build + fit.
    pub initial: LedgerSnapshot,
    /// Counter increments attributable to the retrain call.
    pub retrain_delta: LedgerSnapshot,
    /// Ledger of a fresh build + fit over all n + n_new rows.
    pub fresh_total: LedgerSnapshot,
}

impl CostModelOutcome {
    /// Appended-load writes relative to the initial load.
    pub fn load_write_ratio(&self) -> f64 {
        self.retrain_delta.phase(Phase::Retrain).node_writes as f64
            / self.initial.phase(Phase::Load).node_writes as f64
    }

    /// Retrain algorithmic state preparations relative to a fresh build over
    /// the combined data.
    pub fn algorithmic_state_prep_ratio(&self) -> f64 {
        self.retrain_delta.algorithmic().state_preps as f64
            / self.fresh_total.algorithmic().state_preps as f64
    }

    /// Tabular report with per-run phase counters and the two ratios.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (label, snap) in [
            ("initial", &self.initial),
            ("retrain_delta", &self.retrain_delta),
            ("fresh_total", &self.fresh_total),
        ] {
            out.push_str(&format!("# run: {label}\n"));
            out.push_str(&snapshot_report(snap));
        }
        out.push_str("ratio\tretrain_load_writes_over_initial_load_writes\t");
        out.push_str(&format!("{:.6}\n", self.load_write_ratio()));
        out.push_str("ratio\tretrain_alg_state_preps_over_fresh_build\t");
        out.push_str(&format!("{:.6}\n", self.algorithmic_state_prep_ratio()));
        out
    }
}

fn synthetic_blobs(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let shift = if i % 2 == 0 { 0.0 } else { 3.0 };
        for _ in 0..d {
            x.push(shift + rng.random::<f64>());
        }
        y.push(shift / 3.0 + rng.random::<f64>() * 0.1);
    }
    Dataset::from_flat(
        x,
        y,
        TaskKind::Regression,
        (0..d).map(|j| format!("f{j}")).collect(),
    )
}

/// Run the retraining cost scenario.
pub fn run_cost_model(cfg: &CostModelConfig) -> Result<CostModelOutcome> {
    let total = synthetic_blobs(cfg.n + cfg.n_new, cfg.d, cfg.seed)?;
    let initial_rows: Vec<usize> = (0..cfg.n).collect();
    let new_rows: Vec<usize> = (cfg.n..cfg.n + cfg.n_new).collect();
    let initial_ds = total.subset(&initial_rows)?;
    let batch = total.subset(&new_rows)?;

    let cc = ClusterConfig {
        k: cfg.k,
        estimator: EstimatorConfig {
            method: EstimationMethod::AmplitudeEstimation,
            eps1: cfg.eps,
            eps2: cfg.eps,
            eps3: cfg.eps,
            seed: cfg.seed,
            ..EstimatorConfig::default()
        },
        ..ClusterConfig::default()
    };

    let ledger = Arc::new(QueryLedger::new());
    let mut forest = KpForest::build(&initial_ds, Arc::clone(&ledger));
    let tree = fit(&initial_ds, &forest, &cc, cfg.depth, Weighting::Correlation)?;
    let initial = ledger.snapshot();

    retrain(&tree, &mut forest, &batch, &cc, cfg.depth)?;
    let retrain_delta = ledger.snapshot().saturating_sub(&initial);

    let fresh_ledger = Arc::new(QueryLedger::new());
    let fresh_forest = KpForest::build(&total, Arc::clone(&fresh_ledger));
    fit(&total, &fresh_forest, &cc, cfg.depth, Weighting::Correlation)?;
    let fresh_total = fresh_ledger.snapshot();

    Ok(CostModelOutcome {
        initial,
        retrain_delta,
        fresh_total,
    })
}

/// Expected shape and source file of one benchmark dataset.
pub struct PaperDataSpec {
    pub name: &'static str,
    pub file: &'static str,
    pub task: TaskKind,
    pub rows: usize,
    pub cols: usize,
    /// Apply the Boston feature selection + log transform after loading.
    pub boston_preprocess: bool,
}

/// The four benchmark datasets with their published shapes.
pub fn paper_dataset_specs() -> [PaperDataSpec; 4] {
    [
        PaperDataSpec {
            name: "pima",
            file: "pima.csv",
            task: TaskKind::BinaryClassification,
            rows: 768,
            cols: 8,
            boston_preprocess: false,
        },
        PaperDataSpec {
            name: "spambase",
            file: "spambase.csv",
            task: TaskKind::BinaryClassification,
            rows: 4601,
            cols: 57,
            boston_preprocess: false,
        },
        PaperDataSpec {
            name: "blood",
            file: "blood.csv",
            task: TaskKind::BinaryClassification,
            rows: 748,
            cols: 4,
            boston_preprocess: false,
        },
        PaperDataSpec {
            name: "boston",
            file: "boston.csv",
            task: TaskKind::Regression,
            rows: 506,
            cols: 8,
            boston_preprocess: true,
        },
    ]
}

fn verify_checksums(dir: &std::path::Path) -> Result<()> {
    use sha2::{Digest, Sha256};
    let manifest = dir.join("checksums.sha256");
    let Ok(text) = std::fs::read_to_string(&manifest) else {
        return Ok(()); // no manifest vendored yet
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(expected), Some(file)) = (parts.next(), parts.next()) else {
            return Err(Error::Schema(format!(
                "checksums.sha256: malformed line {line:?}"
            )));
        };
        let path = dir.join(file);
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let got: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        if got != expected.to_lowercase() {
            return Err(Error::Schema(format!(
                "{file}: checksum mismatch (expected {expected}, got {got})"
            )));
        }
    }
    Ok(())
}

/// Load and shape-check the benchmark CSVs (last column is the label; the
/// raw Boston file carries its 13 standard features and is reduced here).
pub fn load_paper_datasets(dir: &std::path::Path) -> Result<Vec<NamedDataset>> {
    verify_checksums(dir)?;
    let mut out = Vec::new();
    for spec in paper_dataset_specs() {
        let path = dir.join(spec.file);
        if !path.exists() {
            return Err(Error::Schema(format!(
                "benchmark dataset {} is missing; see data/README.md for how to vendor it",
                path.display()
            )));
        }
        let mut ds = crate::dataset::load_csv(&path, spec.task, None)?;
        if spec.boston_preprocess {
            ds = crate::dataset::preprocess_boston(&ds)?;
        }
        if ds.n_rows() != spec.rows || ds.n_cols() != spec.cols {
            return Err(Error::Schema(format!(
                "{}: expected {}x{} after preprocessing, got {}x{}",
                spec.file,
                spec.rows,
                spec.cols,
                ds.n_rows(),
                ds.n_cols()
            )));
        }
        out.push(NamedDataset {
            name: spec.name.to_string(),
            ds,
        });
    }
    Ok(out)
}

/// The (dataset, model, depth, k) grid behind the published tables and
/// figure series.
pub fn paper_cells() -> Vec<BenchCell> {
    let mut cells = Vec::new();
    let mut push = |dataset: &str, model: ModelKind, depth: usize, k: usize| {
        cells.push(BenchCell {
            dataset: dataset.into(),
            model,
            depth,
            k,
        });
    };
    for depth in [1, 2] {
        // baselines use binary splits everywhere
        for ds in ["pima", "spambase", "blood", "boston"] {
            push(ds, ModelKind::Baseline, depth, 2);
        }
        // pima carries the full k sweep for the entropy series
        for k in 2..=7 {
            push("pima", ModelKind::DesC, depth, k);
            push("pima", ModelKind::NoWeight, depth, k);
        }
        push("spambase", ModelKind::DesC, depth, 5);
        push("spambase", ModelKind::NoWeight, depth, 5);
        push("blood", ModelKind::DesC, depth, 3);
        push("blood", ModelKind::NoWeight, depth, 3);
        for k in [2, 3, 4, 5, 6] {
            push("boston", ModelKind::DesC, depth, k);
            push("boston", ModelKind::NoWeight, depth, k);
        }
    }
    cells
}

/// Small synthetic suite for exercising the harness without vendored data.
pub fn smoke_datasets(seed: u64) -> Result<Vec<NamedDataset>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = 240;
    let mut xc = Vec::new();
    let mut yc = Vec::new();
    for _ in 0..n {
        let class = rng.random::<f64>() < 0.5;
        let shift = if class { 1.8 } else { 0.0 };
        xc.push(shift + rng.random::<f64>());
        xc.push(rng.random::<f64>() * 2.0 - 1.0);
        xc.push(shift * 0.5 + rng.random::<f64>() * 0.5);
        yc.push(class as u8 as f64);
    }
    let classify = Dataset::from_flat(
        xc,
        yc,
        TaskKind::BinaryClassification,
        vec!["signal".into(), "noise".into(), "weak".into()],
    )?;
    let mut xr = Vec::new();
    let mut yr = Vec::new();
    for _ in 0..n {
        let a = rng.random::<f64>() * 2.0;
        let b = rng.random::<f64>();
        xr.push(a);
        xr.push(b);
        yr.push(2.0 * a + 0.2 * b + rng.random::<f64>() * 0.1);
    }
    let regress = Dataset::from_flat(
        xr,
        yr,
        TaskKind::Regression,
        vec!["a".into(), "b".into()],
    )?;
    Ok(vec![
        NamedDataset {
            name: "smoke-classify".into(),
            ds: classify,
        },
        NamedDataset {
            name: "smoke-regress".into(),
            ds: regress,
        },
    ])
}

pub fn smoke_cells() -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for depth in [1, 2] {
        for k in [2, 3] {
            for model in [ModelKind::DesC, ModelKind::NoWeight] {
                for ds in ["smoke-classify", "smoke-regress"] {
                    cells.push(BenchCell {
                        dataset: ds.into(),
                        model,
                        depth,
                        k,
                    });
                }
            }
        }
        for ds in ["smoke-classify", "smoke-regress"] {
            cells.push(BenchCell {
                dataset: ds.into(),
                model: ModelKind::Baseline,
                depth,
                k: 2,
            });
        }
    }
    cells
}

fn table_row(out: &mut String, c: &CellResult) {
    out.push_str(&format!(
        "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
        c.dataset,
        c.model.name(),
        c.depth,
        c.k,
        c.test_mean(),
        c.test_std(),
        c.train_mean(),
        pop_std(&c.train_metric),
        c.size_mean()
    ));
}

/// Emit one file per published table/figure series.
pub fn write_paper_tables(report: &BenchReport, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let header = "dataset\tmodel\tdepth\tk\tmetric_mean\tmetric_std\ttrain_mean\ttrain_std\ttree_size_mean\n";

    // main table: depth-2 cells at the headline cluster counts
    let mut main = String::from(header);
    for (ds, model, k) in [
        ("pima", ModelKind::Baseline, 2),
        ("pima", ModelKind::DesC, 7),
        ("spambase", ModelKind::Baseline, 2),
        ("spambase", ModelKind::DesC, 5),
        ("blood", ModelKind::Baseline, 2),
        ("blood", ModelKind::DesC, 3),
        ("boston", ModelKind::Baseline, 2),
        ("boston", ModelKind::DesC, 4),
    ] {
        if let Some(c) = report.find(ds, model, 2, k) {
            table_row(&mut main, c);
        }
    }
    std::fs::write(dir.join("table_main.tsv"), main)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;

    // classification benchmark across both depths
    let mut class = String::from(header);
    for depth in [1, 2] {
        for (ds, k_desc) in [("pima", [2, 7]), ("spambase", [5, 5]), ("blood", [3, 3])] {
            if let Some(c) = report.find(ds, ModelKind::Baseline, depth, 2) {
                table_row(&mut class, c);
            }
            let k = k_desc[depth - 1];
            if let Some(c) = report.find(ds, ModelKind::DesC, depth, k) {
                table_row(&mut class, c);
            }
        }
    }
    std::fs::write(dir.join("table_classification.tsv"), class)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;

    // regression benchmark with test variance
    let mut reg = String::from(
        "dataset\tmodel\tdepth\tk\trmse_mean\trmse_std\tvariance_mean\ttree_size_mean\n",
    );
    for depth in [1, 2] {
        for (model, k) in [
            (ModelKind::Baseline, 2),
            (ModelKind::DesC, [4, 5][depth - 1]),
        ] {
            if let Some(c) = report.find("boston", model, depth, k) {
                reg.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                    c.dataset,
                    c.model.name(),
                    c.depth,
                    c.k,
                    c.test_mean(),
                    c.test_std(),
                    c.test_impurity_mean(),
                    c.size_mean()
                ));
            }
        }
    }
    std::fs::write(dir.join("table_regression.tsv"), reg)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;

    // figure series: entropy on pima, variance on boston
    for (file, ds) in [
        ("figure_pima_entropy.tsv", "pima"),
        ("figure_boston_variance.tsv", "boston"),
    ] {
        let mut fig = String::from(
            "dataset\tmodel\tdepth\tk\timpurity_train_mean\timpurity_train_std\timpurity_test_mean\n",
        );
        for c in report.cells.iter().filter(|c| c.dataset == ds) {
            fig.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                c.dataset,
                c.model.name(),
                c.depth,
                c.k,
                c.train_impurity_mean(),
                pop_std(&c.train_impurity),
                c.test_impurity_mean()
            ));
        }
        std::fs::write(dir.join(file), fig)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    Ok(())
}
