//! Dataset loading, preprocessing, fold plans, and standardization.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Learning task the labels encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    BinaryClassification,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::BinaryClassification => "classification",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "regression" | "regress" => Some(TaskKind::Regression),
            "classification" | "classify" => Some(TaskKind::BinaryClassification),
            _ => None,
        }
    }
}

/// An N×d numeric matrix with labels, stored row-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Vec<f64>,
    n: usize,
    d: usize,
    y: Vec<f64>,
    task: TaskKind,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Build from a flat row-major matrix, validating the type invariants:
    /// N ≥ 1, d ≥ 1, matching label length, finite values, {0,1} labels for
    /// classification.
    pub fn from_flat(
        x: Vec<f64>,
        y: Vec<f64>,
        task: TaskKind,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let d = feature_names.len();
        if n == 0 || d == 0 {
            return Err(Error::Schema(format!(
                "dataset must have N >= 1 and d >= 1, got N={n}, d={d}"
            )));
        }
        if x.len() != n * d {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: n * d,
            });
        }
        if let Some(bad) = x.iter().chain(y.iter()).find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: "<memory>".into(),
                line: 0,
                msg: format!("non-finite value {bad}"),
            });
        }
        if task == TaskKind::BinaryClassification {
            if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Label(format!(
                    "classification labels must be 0 or 1, got {bad}"
                )));
            }
        }
        Ok(Dataset {
            x,
            n,
            d,
            y,
            task,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.x[i * self.d + j]).collect()
    }

    /// Dataset restricted to `rows`, preserving their order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let mut x = Vec::with_capacity(rows.len() * self.d);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset::from_flat(x, y, self.task, self.feature_names.clone())
    }

    /// Concatenate rows of `self` and `other` (schemas must match).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if other.d != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: other.d,
            });
        }
        if other.task != self.task {
            return Err(Error::Schema("cannot concatenate datasets of different tasks".into()));
        }
        let mut x = self.x.clone();
        x.extend_from_slice(&other.x);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Dataset::from_flat(x, y, self.task, self.feature_names.clone())
    }
}

/// Load a headered CSV ('.' decimals, UTF-8). `label_column` picks the label
/// by name; `None` takes the last column. All other columns become features
/// in file order; row order is preserved.
pub fn load_csv(path: &Path, task: TaskKind, label_column: Option<&str>) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(&display, std::io::Error::other(e.to_string())),
            _ => Error::Parse {
                path: display.clone(),
                line: 1,
                msg: e.to_string(),
            },
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: display.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::Schema(format!(
            "{display}: need at least one feature and one label column"
        )));
    }
    let label_idx = match label_column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{display}: label column {name:?} not found")))?,
        None => headers.len() - 1,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let line = rec_no + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("expected {} cells, got {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                msg: format!("non-numeric cell {cell:?} in column {:?}", headers[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    line,
                    msg: format!("non-finite cell in column {:?}", headers[j]),
                });
            }
            if j == label_idx {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    if task == TaskKind::BinaryClassification {
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Label(format!(
                "{display}: classification labels must be 0 or 1, got {bad}"
            )));
        }
    }
    Dataset::from_flat(x, y, task, feature_names)
}

/// Feature subset kept for the Boston housing regression, in this order.
pub const BOSTON_FEATURES: [&str; 8] = [
    "LSTAT", "INDUS", "NOX", "PTRATIO", "RM", "TAX", "DIS", "AGE",
];

/// Reduce raw Boston housing data (13 standard features) to the eight-feature
/// subset, de-skewing each kept column with log(1+x).
pub fn preprocess_boston(raw: &Dataset) -> Result<Dataset> {
    let mut keep = Vec::with_capacity(BOSTON_FEATURES.len());
    for want in BOSTON_FEATURES {
        let j = raw
            .feature_names()
            .iter()
            .position(|h| h.eq_ignore_ascii_case(want))
            .ok_or_else(|| Error::Schema(format!("boston feature {want:?} absent")))?;
        keep.push(j);
    }
    if raw.n_cols() <= BOSTON_FEATURES.len() {
        // Already reduced: the selection must not be applied twice.
        return Err(Error::Schema(
            "boston data already preprocessed (12+ raw features expected)".into(),
        ));
    }
    let n = raw.n_rows();
    let mut x = Vec::with_capacity(n * keep.len());
    for i in 0..n {
        let row = raw.row(i);
        for &j in &keep {
            let v = row[j];
            if v < -1.0 {
                return Err(Error::Schema(format!(
                    "log1p transform undefined for {v} in column {j}"
                )));
            }
            x.push(v.ln_1p());
        }
    }
    Dataset::from_flat(
        x,
        raw.labels().to_vec(),
        raw.task(),
        BOSTON_FEATURES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Independent seeded train/test resamples (not cross-validation partitions).
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub splits: Vec<(Vec<usize>, Vec<usize>)>,
}

impl FoldPlan {
    /// Tabular export: `fold<TAB>role<TAB>row_index`.
    pub fn export(&self) -> String {
        let mut out = String::from("fold\trole\trow_index\n");
        for (f, (train, test)) in self.splits.iter().enumerate() {
            for &i in train {
                out.push_str(&format!("{f}\ttrain\t{i}\n"));
            }
            for &i in test {
                out.push_str(&format!("{f}\ttest\t{i}\n"));
            }
        }
        out
    }
}

/// Draw `n_folds` independent shuffles of [N] with `test_fraction` of rows
/// held out; fold f uses seed `seed + f` so plans are reproducible.
pub fn make_folds(ds: &Dataset, n_folds: usize, test_fraction: f64, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(Error::Config("need at least one fold".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0,1), got {test_fraction}"
        )));
    }
    let n = ds.n_rows();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Config(format!(
            "test split of {n_test} rows out of {n} leaves an empty side"
        )));
    }
    let mut splits = Vec::with_capacity(n_folds);
    for f in 0..n_folds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(f as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (test, train) = idx.split_at(n_test);
        let mut test = test.to_vec();
        let mut train = train.to_vec();
        test.sort_unstable();
        train.sort_unstable();
        splits.push((train, test));
    }
    Ok(FoldPlan {
        n_folds,
        test_fraction,
        seed,
        splits,
    })
}

/// Per-feature centering/scaling fitted on a training split; regression
/// labels additionally get min-max scaled to [0,1] with training extremes.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub label_min: f64,
    pub label_max: f64,
    pub task: TaskKind,
}

impl Standardizer {
    /// Fit on the given training rows only. Zero-variance columns keep their
    /// mean and get unit std so they pass through as zeros.
    pub fn fit(ds: &Dataset, train_idx: &[usize]) -> Result<Standardizer> {
        if train_idx.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = ds.n_cols();
        let m = train_idx.len() as f64;
        let mut means = vec![0.0; d];
        for &i in train_idx {
            for (j, v) in ds.row(i).iter().enumerate() {
                means[j] += v;
            }
        }
        for mean in &mut means {
            *mean /= m;
        }
        let mut stds = vec![0.0; d];
        for &i in train_idx {
            for (j, v) in ds.row(i).iter().enumerate() {
                let dev = v - means[j];
                stds[j] += dev * dev;
            }
        }
        for std in &mut stds {
            *std = (*std / m).sqrt();
            if *std == 0.0 {
                *std = 1.0;
            }
        }
        let (mut label_min, mut label_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in train_idx {
            label_min = label_min.min(ds.label(i));
            label_max = label_max.max(ds.label(i));
        }
        Ok(Standardizer {
            means,
            stds,
            label_min,
            label_max,
            task: ds.task(),
        })
    }

    /// Transform a whole dataset (features standardized; regression labels
    /// min-max scaled).
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_cols() != self.means.len() {
            return Err(Error::Dimension {
                expected: self.means.len(),
                got: ds.n_cols(),
            });
        }
        let mut x = Vec::with_capacity(ds.x_flat().len());
        for i in 0..ds.n_rows() {
            x.extend(self.apply_row(ds.row(i)));
        }
        let y = ds.labels().iter().map(|&v| self.scale_label(v)).collect();
        Dataset::from_flat(x, y, ds.task(), ds.feature_names().to_vec())
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (mean, std))| (v - mean) / std)
            .collect()
    }

    pub fn scale_label(&self, y: f64) -> f64 {
        match self.task {
            TaskKind::BinaryClassification => y,
            TaskKind::Regression => {
                let range = self.label_max - self.label_min;
                if range == 0.0 {
                    0.0
                } else {
                    (y - self.label_min) / range
                }
            }
        }
    }

    pub fn invert_label(&self, scaled: f64) -> f64 {
        match self.task {
            TaskKind::BinaryClassification => scaled,
            TaskKind::Regression => {
                let range = self.label_max - self.label_min;
                self.label_min + scaled * range
            }
        }
    }

    /// Versioned tabular dump.
    pub fn dump(&self) -> String {
        let mut out = String::from("desq-standardizer\tv1\n");
        out.push_str(&format!(
            "label\t{}\t{:?}\t{:?}\n",
            self.task.name(),
            self.label_min,
            self.label_max
        ));
        for (j, (mean, std)) in self.means.iter().zip(&self.stds).enumerate() {
            out.push_str(&format!("feature\t{j}\t{mean:?}\t{std:?}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Standardizer> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<standardizer dump>".into(),
            line: line + 1,
            msg: msg.into(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "desq-standardizer\tv1")) => {}
            _ => return Err(bad(0, "unsupported header")),
        }
        let mut means = Vec::new();
        let mut stds = Vec::new();
        let mut label = None;
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f[0] {
                "label" if f.len() == 4 => {
                    let task = TaskKind::parse(f[1]).ok_or_else(|| bad(i, "unknown task"))?;
                    let lo: f64 = f[2].parse().map_err(|_| bad(i, "bad label min"))?;
                    let hi: f64 = f[3].parse().map_err(|_| bad(i, "bad label max"))?;
                    label = Some((task, lo, hi));
                }
                "feature" if f.len() == 4 => {
                    means.push(f[2].parse().map_err(|_| bad(i, "bad mean"))?);
                    stds.push(f[3].parse().map_err(|_| bad(i, "bad std"))?);
                }
                _ => return Err(bad(i, "unknown row")),
            }
        }
        let (task, label_min, label_max) = label.ok_or_else(|| bad(0, "missing label row"))?;
        if means.is_empty() {
            return Err(bad(0, "missing feature rows"));
        }
        Ok(Standardizer {
            means,
            stds,
            label_min,
            label_max,
            task,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_minimal_csv() {
        let f = write_csv("x,y\n1,0\n");
        let ds = load_csv(f.path(), TaskKind::BinaryClassification, Some("y")).unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.n_cols(), 1);
        assert_eq!(ds.labels(), &[0.0]);
        assert_eq!(ds.feature_names(), ["x".to_string()]);
    }

    #[test]
    fn load_rejects_bad_cells_and_labels() {
        let f = write_csv("a,b,y\n1,2,0\n1,oops,1\n");
        let err = load_csv(f.path(), TaskKind::BinaryClassification, Some("y")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let f = write_csv("a,y\n1,0\n2\n");
        assert!(matches!(
            load_csv(f.path(), TaskKind::BinaryClassification, Some("y")),
            Err(Error::Parse { .. })
        ));

        let f = write_csv("a,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), TaskKind::BinaryClassification, Some("y")),
            Err(Error::Label(_))
        ));

        // same file is fine as regression
        let f = write_csv("a,y\n1,2\n");
        assert!(load_csv(f.path(), TaskKind::Regression, Some("y")).is_ok());
    }

    #[test]
    fn label_column_defaults_to_last() {
        let f = write_csv("a,b,c\n1,2,3\n4,5,6\n");
        let ds = load_csv(f.path(), TaskKind::Regression, None).unwrap();
        assert_eq!(ds.labels(), &[3.0, 6.0]);
        assert_eq!(ds.feature_names(), ["a".to_string(), "b".to_string()]);
    }

    fn boston_like(n: usize) -> Dataset {
        let names = [
            "CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE", "DIS", "RAD", "TAX", "PTRATIO",
            "B", "LSTAT",
        ];
        let d = names.len();
        let x: Vec<f64> = (0..n * d).map(|v| (v % 13) as f64 * 0.5).collect();
        Dataset::from_flat(
            x,
            (0..n).map(|i| i as f64).collect(),
            TaskKind::Regression,
            names.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn boston_preprocess_selects_and_transforms() {
        let raw = boston_like(10);
        let ds = preprocess_boston(&raw).unwrap();
        assert_eq!(ds.n_cols(), 8);
        let names: Vec<&str> = ds.feature_names().iter().map(|s| s.as_str()).collect();
        assert_eq!(names, BOSTON_FEATURES);
        // first kept column is LSTAT (raw index 12), log1p applied
        let lstat_raw = raw.column(12);
        for (got, want) in ds.column(0).iter().zip(lstat_raw.iter()) {
            assert_abs_diff_eq!(*got, want.ln_1p(), epsilon = 1e-12);
        }
        // applying twice fails: the dropped features are gone
        assert!(matches!(preprocess_boston(&ds), Err(Error::Schema(_))));
    }

    fn toy(n: usize) -> Dataset {
        Dataset::from_flat(
            (0..n * 2).map(|v| v as f64).collect(),
            (0..n).map(|i| (i % 2) as f64).collect(),
            TaskKind::BinaryClassification,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn folds_are_deterministic_and_partition() {
        let ds = toy(768);
        let plan = make_folds(&ds, 10, 0.3, 42).unwrap();
        assert_eq!(plan.splits.len(), 10);
        for (train, test) in &plan.splits {
            assert!((test.len() as i64 - 230).abs() <= 1, "test size {}", test.len());
            let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..768).collect::<Vec<_>>());
        }
        let again = make_folds(&ds, 10, 0.3, 42).unwrap();
        assert_eq!(plan.splits, again.splits);
        let other = make_folds(&ds, 10, 0.3, 43).unwrap();
        assert_ne!(plan.splits, other.splits);

        let boston = toy(506);
        let plan = make_folds(&boston, 5, 0.3, 1).unwrap();
        assert_eq!(plan.splits.len(), 5);
        for (_, test) in &plan.splits {
            assert!((test.len() as i64 - 152).abs() <= 1);
        }
    }

    #[test]
    fn fold_rejects_degenerate_fractions() {
        let ds = toy(10);
        assert!(matches!(make_folds(&ds, 1, 0.01, 0), Err(Error::Config(_))));
        assert!(matches!(make_folds(&ds, 0, 0.3, 0), Err(Error::Config(_))));
        assert!(matches!(make_folds(&ds, 1, 1.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let ds = Dataset::from_flat(
            vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0],
            vec![10.0, 20.0, 30.0],
            TaskKind::Regression,
            vec!["a".into(), "const".into()],
        )
        .unwrap();
        let std = Standardizer::fit(&ds, &[0, 1, 2]).unwrap();
        let out = std.apply(&ds).unwrap();
        let a = out.column(0);
        assert_abs_diff_eq!(a[0], -1.2247, epsilon = 1e-4);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], 1.2247, epsilon = 1e-4);
        // constant column maps to zeros
        assert!(out.column(1).iter().all(|v| *v == 0.0));
        // regression labels min-max scaled on training extremes
        assert_eq!(out.labels(), &[0.0, 0.5, 1.0]);
        for y in [10.0, 17.0, 30.0] {
            assert_abs_diff_eq!(std.invert_label(std.scale_label(y)), y, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardizer_ignores_test_rows() {
        let ds = toy(50);
        let train: Vec<usize> = (0..30).collect();
        let a = Standardizer::fit(&ds, &train).unwrap();
        // mutate the held-out rows; parameters must be identical
        let mut x = ds.x_flat().to_vec();
        for v in x.iter_mut().skip(30 * 2) {
            *v += 1000.0;
        }
        let mutated =
            Dataset::from_flat(x, ds.labels().to_vec(), ds.task(), ds.feature_names().to_vec())
                .unwrap();
        let b = Standardizer::fit(&mutated, &train).unwrap();
        assert_eq!(a.means, b.means);
        assert_eq!(a.stds, b.stds);
    }

    #[test]
    fn standardizer_roundtrip_on_train_split() {
        let ds = Dataset::from_flat(
            (0..40).map(|v| (v as f64 * 1.37).sin() * 3.0).collect(),
            (0..20).map(|i| i as f64).collect(),
            TaskKind::Regression,
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let train: Vec<usize> = (0..15).collect();
        let std = Standardizer::fit(&ds, &train).unwrap();
        let out = std.apply(&ds).unwrap();
        for j in 0..2 {
            let col = out.column(j);
            let m = train.len() as f64;
            let mean: f64 = train.iter().map(|&i| col[i]).sum::<f64>() / m;
            let var: f64 = train.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn standardizer_dump_roundtrip() {
        let ds = toy(8);
        let std = Standardizer::fit(&ds, &[0, 1, 2, 3]).unwrap();
        let parsed = Standardizer::parse(&std.dump()).unwrap();
        assert_eq!(parsed.means, std.means);
        assert_eq!(parsed.stds, std.stds);
        assert_eq!(parsed.task, std.task);
    }
}
