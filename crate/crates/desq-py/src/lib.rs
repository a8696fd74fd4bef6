//! Python bindings: datasets, tree training/prediction/retraining, feature
//! weights, the axis-parallel baseline, and the query-ledger report.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use desq_core::baseline::{fit_axis, AxisTree};
use desq_core::cluster::{AssignmentRule, ClusterConfig};
use desq_core::dataset::{Dataset as CoreDataset, Standardizer, TaskKind};
use desq_core::kptree::KpForest;
use desq_core::qestimate::{EstimationMethod, EstimatorConfig, QueryLedger};
use desq_core::tree::{fit, retrain, DesqTree, Weighting};
use desq_core::weights::compute_weights;

fn err(e: desq_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_task(task: &str) -> PyResult<TaskKind> {
    TaskKind::parse(task)
        .ok_or_else(|| PyValueError::new_err(format!("unknown task {task:?} (classify | regress)")))
}

fn parse_method(method: &str) -> PyResult<EstimationMethod> {
    match method {
        "exact" => Ok(EstimationMethod::Exact),
        "chernoff" => Ok(EstimationMethod::Chernoff),
        "ae" => Ok(EstimationMethod::AmplitudeEstimation),
        other => Err(PyValueError::new_err(format!(
            "unknown method {other:?} (exact | chernoff | ae)"
        ))),
    }
}

/// An in-memory dataset: a feature matrix plus labels.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (x, y, task, feature_names=None))]
    fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        task: &str,
        feature_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let task = parse_task(task)?;
        let d = x.first().map(|r| r.len()).unwrap_or(0);
        if x.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("rows must share one length"));
        }
        let names =
            feature_names.unwrap_or_else(|| (0..d).map(|j| format!("f{j}")).collect());
        let flat: Vec<f64> = x.into_iter().flatten().collect();
        Ok(Dataset {
            inner: CoreDataset::from_flat(flat, y, task, names).map_err(err)?,
        })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }
}

/// A trained centroid tree bundled with its KP-tree forest and standardizer;
/// retraining appends rows to the forest and rebuilds in place.
#[pyclass]
pub struct Model {
    tree: DesqTree,
    forest: KpForest,
    standardizer: Standardizer,
}

#[pymethods]
impl Model {
    /// Predict a single raw-feature row (labels in original units).
    fn predict(&self, row: Vec<f64>) -> PyResult<f64> {
        let scaled = self
            .tree
            .predict(&self.standardizer.apply_row(&row))
            .map_err(err)?;
        Ok(self.standardizer.invert_label(scaled))
    }

    fn predict_batch(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        rows.into_iter().map(|r| self.predict(r)).collect()
    }

    /// Append labeled rows and rebuild the tree over all data.
    fn retrain(&mut self, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<()> {
        let d = self.forest.n_cols();
        if x.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err(format!("rows must have {d} features")));
        }
        let flat: Vec<f64> = x.into_iter().flatten().collect();
        let names = self.forest.feature_names().to_vec();
        let raw = CoreDataset::from_flat(flat, y, self.forest.task(), names).map_err(err)?;
        let batch = self.standardizer.apply(&raw).map_err(err)?;
        let cc = self.tree.config.clone();
        let depth = self.tree.depth_cap;
        self.tree = retrain(&self.tree, &mut self.forest, &batch, &cc, depth).map_err(err)?;
        Ok(())
    }

    /// (raw, normalized) correlation weights from training.
    fn feature_weights(&self) -> (Vec<f64>, Vec<f64>) {
        (self.tree.weights.raw.clone(), self.tree.weights.normalized.clone())
    }

    fn tree_size(&self) -> usize {
        self.tree.size()
    }

    fn depth(&self) -> usize {
        self.tree.max_depth()
    }

    fn n_rows(&self) -> usize {
        self.forest.n_rows()
    }

    /// Per-phase simulated-cost counters as tabular text.
    fn ledger_report(&self) -> String {
        self.forest.ledger().report()
    }

    /// Serialized tree structure (tabular text).
    fn dump_tree(&self) -> String {
        self.tree.dump()
    }
}

/// Train a feature-weighted clustering tree.
#[pyfunction]
#[pyo3(signature = (
    dataset,
    depth=2,
    clusters=3,
    seed=1,
    method="exact",
    weighted=true,
    rule="distance",
    iters=100,
    tol=1e-4,
    eps1=0.01,
    eps2=0.01,
    eps3=0.01,
    delta=0.05,
    delta_kmeans=0.0,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    dataset: &Dataset,
    depth: usize,
    clusters: usize,
    seed: u64,
    method: &str,
    weighted: bool,
    rule: &str,
    iters: usize,
    tol: f64,
    eps1: f64,
    eps2: f64,
    eps3: f64,
    delta: f64,
    delta_kmeans: f64,
) -> PyResult<Model> {
    let estimator = EstimatorConfig {
        eps1,
        eps2,
        eps3,
        delta_cap: delta,
        delta_kmeans,
        method: parse_method(method)?,
        seed,
    };
    let cc = ClusterConfig {
        k: clusters,
        max_iters: iters,
        tol,
        assignment_rule: AssignmentRule::parse(rule)
            .ok_or_else(|| PyValueError::new_err("rule must be distance | inner-product"))?,
        init: Default::default(),
        estimator,
    };
    let raw = &dataset.inner;
    let all: Vec<usize> = (0..raw.n_rows()).collect();
    let standardizer = Standardizer::fit(raw, &all).map_err(err)?;
    let ds = standardizer.apply(raw).map_err(err)?;
    let forest = KpForest::build(&ds, Arc::new(QueryLedger::new()));
    let weighting = if weighted {
        Weighting::Correlation
    } else {
        Weighting::Uniform
    };
    let tree = fit(&ds, &forest, &cc, depth, weighting).map_err(err)?;
    Ok(Model {
        tree,
        forest,
        standardizer,
    })
}

/// (raw, normalized) Pearson/point-biserial weights of a dataset.
#[pyfunction]
#[pyo3(signature = (dataset, method="exact", eps1=0.01, seed=1))]
fn feature_weights(
    dataset: &Dataset,
    method: &str,
    eps1: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = EstimatorConfig {
        eps1,
        method: parse_method(method)?,
        seed,
        ..EstimatorConfig::default()
    };
    let raw = &dataset.inner;
    let all: Vec<usize> = (0..raw.n_rows()).collect();
    let standardizer = Standardizer::fit(raw, &all).map_err(err)?;
    let ds = standardizer.apply(raw).map_err(err)?;
    let forest = KpForest::build(&ds, Arc::new(QueryLedger::new()));
    let w = compute_weights(&forest, &ds, &cfg).map_err(err)?;
    Ok((w.raw, w.normalized))
}

/// The axis-parallel reference tree.
#[pyclass]
pub struct Baseline {
    tree: AxisTree,
    standardizer: Standardizer,
}

#[pymethods]
impl Baseline {
    fn predict(&self, row: Vec<f64>) -> PyResult<f64> {
        let scaled = self
            .tree
            .predict(&self.standardizer.apply_row(&row))
            .map_err(err)?;
        Ok(self.standardizer.invert_label(scaled))
    }

    fn tree_size(&self) -> usize {
        self.tree.size()
    }
}

/// Train the entropy/MSE axis-parallel baseline tree.
#[pyfunction]
#[pyo3(signature = (dataset, depth=2))]
fn train_baseline(dataset: &Dataset, depth: usize) -> PyResult<Baseline> {
    let raw = &dataset.inner;
    let all: Vec<usize> = (0..raw.n_rows()).collect();
    let standardizer = Standardizer::fit(raw, &all).map_err(err)?;
    let ds = standardizer.apply(raw).map_err(err)?;
    let tree = fit_axis(&ds, &all, depth).map_err(err)?;
    Ok(Baseline {
        tree,
        standardizer,
    })
}

#[pymodule]
fn desq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Baseline>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(feature_weights, m)?)?;
    m.add_function(wrap_pyfunction!(train_baseline, m)?)?;
    Ok(())
}
