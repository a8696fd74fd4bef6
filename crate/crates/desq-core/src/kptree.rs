//! KP-tree storage: binary-tree accumulators of squared values.
//!
//! Each stored vector gets a binary tree whose leaves hold squared entries
//! plus their signs and whose internal nodes hold subtree sums, so the root
//! is the squared norm. Amplitude-encoded states are reconstructed from the
//! tree alone by the conditional-rotation recursion (child/parent value
//! ratios down to signed leaves), never by re-reading the source matrix.
//! A forest bundles per-row trees, per-feature column trees, the label tree
//! and a row-norms tree, supports incremental row appends with capacity
//! doubling, and charges every write and state preparation to the shared
//! query ledger.

use std::sync::Arc;

use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::qestimate::{Phase, QueryLedger};

/// Relative tolerance for structural consistency checks.
const NODE_SUM_RTOL: f64 = 1e-9;

/// A unit-norm amplitude vector together with the encoded vector's ℓ2 norm.
#[derive(Debug, Clone)]
pub struct AmplitudeVector {
    pub amplitudes: Vec<f64>,
    pub norm: f64,
}

impl AmplitudeVector {
    /// Encode a raw vector; fails on (numerically) zero norm.
    pub fn encode(v: &[f64]) -> Result<Self> {
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if norm_sq <= 0.0 {
            return Err(Error::ZeroNorm("cannot amplitude-encode the zero vector".into()));
        }
        let norm = norm_sq.sqrt();
        Ok(AmplitudeVector {
            amplitudes: v.iter().map(|x| x / norm).collect(),
            norm,
        })
    }

    /// The uniform state |u⟩ = (1/√n, …, 1/√n) with unit scale.
    pub fn uniform(n: usize) -> Self {
        let a = 1.0 / (n as f64).sqrt();
        AmplitudeVector {
            amplitudes: vec![a; n],
            norm: 1.0,
        }
    }

    /// Characteristic state of an index set: 1/√|C| on members, 0 elsewhere.
    pub fn characteristic(members: &[usize], len: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let a = 1.0 / (members.len() as f64).sqrt();
        let mut amplitudes = vec![0.0; len];
        for &i in members {
            amplitudes[i] = a;
        }
        Ok(AmplitudeVector { amplitudes, norm: 1.0 })
    }

    /// Recover the raw vector: amplitudes scaled by the stored norm.
    pub fn decode(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * self.norm).collect()
    }
}

/// Per-kind write counts produced by a build or append.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteStats {
    pub row_writes: u64,
    pub col_writes: u64,
    pub label_writes: u64,
    pub norm_writes: u64,
}

impl WriteStats {
    pub fn total(&self) -> u64 {
        self.row_writes + self.col_writes + self.label_writes + self.norm_writes
    }
}

/// One binary accumulator tree: `levels[0]` is the root, `levels[height]`
/// the leaf array (capacity padded to a power of two).
#[derive(Debug, Clone)]
pub struct KpBinaryTree {
    capacity: usize,
    len: usize,
    levels: Vec<Vec<f64>>,
    negative: Vec<bool>,
    populated: Vec<bool>,
}

impl KpBinaryTree {
    pub fn with_capacity(n: usize) -> Self {
        let capacity = n.max(1).next_power_of_two();
        let height = capacity.trailing_zeros() as usize;
        let levels = (0..=height).map(|t| vec![0.0; 1 << t]).collect();
        KpBinaryTree {
            capacity,
            len: 0,
            levels,
            negative: vec![false; capacity],
            populated: vec![false; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of populated leaf slots (the logical vector length).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    /// Root value: the sum of squared leaf values.
    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn node(&self, depth: usize, offset: usize) -> f64 {
        self.levels[depth][offset]
    }

    /// Signed raw value stored at leaf `idx` (sign · √(leaf)).
    pub fn leaf_value(&self, idx: usize) -> f64 {
        let sq = self.levels[self.height()][idx];
        let v = sq.sqrt();
        if self.negative[idx] {
            -v
        } else {
            v
        }
    }

    /// Store `value` at leaf `idx` (as value² plus sign) and update the
    /// ancestor path. Returns the number of node writes, one per ancestor
    /// level; the leaf slot itself is not counted.
    pub fn set(&mut self, idx: usize, value: f64) -> u64 {
        let h = self.height();
        let sq = value * value;
        let old = if self.populated[idx] { self.levels[h][idx] } else { 0.0 };
        let delta = sq - old;
        self.levels[h][idx] = sq;
        self.negative[idx] = value < 0.0;
        self.populated[idx] = true;
        self.len = self.len.max(idx + 1);
        let mut off = idx;
        for t in (0..h).rev() {
            off >>= 1;
            let node = &mut self.levels[t][off];
            *node += delta;
            if *node < 0.0 {
                // delta arithmetic can leave a negative ulp behind
                *node = 0.0;
            }
        }
        h as u64
    }

    /// Append `value` as the next leaf, doubling capacity when full.
    pub fn push(&mut self, value: f64) -> u64 {
        if self.len == self.capacity {
            self.grow();
        }
        let idx = self.len;
        self.set(idx, value)
    }

    /// Double the capacity: the old tree becomes the left subtree of a new
    /// root carrying the same total. Restructuring is not a counted write.
    fn grow(&mut self) {
        let mut levels = Vec::with_capacity(self.levels.len() + 1);
        levels.push(vec![self.levels[0][0]]);
        for (t, lv) in self.levels.iter().enumerate() {
            let mut wide = vec![0.0; 1 << (t + 1)];
            wide[..lv.len()].copy_from_slice(lv);
            levels.push(wide);
        }
        self.levels = levels;
        self.capacity *= 2;
        self.negative.resize(self.capacity, false);
        self.populated.resize(self.capacity, false);
    }

    /// Reconstruct the amplitude state by descending the tree: each child
    /// contributes √(child/parent) to its subtree's amplitude and leaves
    /// contribute their sign. The source vector is never consulted.
    pub fn amplitude_state(&self) -> Result<AmplitudeVector> {
        let root = self.root();
        if root <= 0.0 || self.len == 0 {
            return Err(Error::ZeroNorm("state preparation on zero-norm tree".into()));
        }
        let mut amplitudes = vec![0.0; self.len];
        self.descend(0, 0, 1.0, &mut amplitudes);
        Ok(AmplitudeVector {
            amplitudes,
            norm: root.sqrt(),
        })
    }

    fn descend(&self, depth: usize, offset: usize, partial: f64, out: &mut [f64]) {
        if depth == self.height() {
            if offset < out.len() && self.populated[offset] {
                out[offset] = if self.negative[offset] { -partial } else { partial };
            }
            return;
        }
        let parent = self.levels[depth][offset];
        for c in 0..2 {
            let child_off = 2 * offset + c;
            let child = self.levels[depth + 1][child_off];
            if child > 0.0 {
                self.descend(depth + 1, child_off, partial * (child / parent).sqrt(), out);
            }
        }
    }

    /// Verify parent = sum(children) at every internal node and that all
    /// node values are nonnegative.
    pub fn check_consistency(&self) -> Result<()> {
        for t in 0..self.height() {
            for (off, &v) in self.levels[t].iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::Invariant(format!(
                        "negative node value {v} at depth {t} offset {off}"
                    )));
                }
                let sum = self.levels[t + 1][2 * off] + self.levels[t + 1][2 * off + 1];
                let tol = NODE_SUM_RTOL * v.abs().max(1.0);
                if (v - sum).abs() > tol {
                    return Err(Error::Invariant(format!(
                        "node ({t},{off}) = {v} but children sum to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The KP-tree family over one dataset: row trees Bᵢ, per-feature column
/// trees, the label tree, and a tree of per-row norms.
pub struct KpForest {
    n_rows: usize,
    n_cols: usize,
    task: TaskKind,
    feature_names: Vec<String>,
    row_trees: Vec<KpBinaryTree>,
    col_trees: Vec<KpBinaryTree>,
    label_tree: KpBinaryTree,
    norms_tree: KpBinaryTree,
    ledger: Arc<QueryLedger>,
}

impl KpForest {
    /// Load a dataset, charging one write unit per node update to the
    /// ledger's load phase.
    pub fn build(ds: &Dataset, ledger: Arc<QueryLedger>) -> Self {
        ledger.set_phase(Phase::Load);
        let (n, d) = (ds.n_rows(), ds.n_cols());
        let mut forest = KpForest {
            n_rows: 0,
            n_cols: d,
            task: ds.task(),
            feature_names: ds.feature_names().to_vec(),
            row_trees: Vec::with_capacity(n),
            col_trees: (0..d).map(|_| KpBinaryTree::with_capacity(n)).collect(),
            label_tree: KpBinaryTree::with_capacity(n),
            norms_tree: KpBinaryTree::with_capacity(n),
            ledger,
        };
        forest
            .append_slice(ds.x_flat(), ds.labels())
            .expect("build dimensions are consistent by construction");
        forest
    }

    /// Append a batch of rows given as a flat row-major slice plus labels.
    /// An empty batch is a no-op. Write units land in the ledger's current
    /// phase (load during build, retrain during retraining).
    pub fn append_slice(&mut self, x: &[f64], y: &[f64]) -> Result<WriteStats> {
        if x.len() != y.len() * self.n_cols {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len() * self.n_cols,
            });
        }
        let n_new = y.len();
        let mut stats = WriteStats::default();
        for r in 0..n_new {
            let row = &x[r * self.n_cols..(r + 1) * self.n_cols];
            let mut tree = KpBinaryTree::with_capacity(self.n_cols);
            for (j, &v) in row.iter().enumerate() {
                stats.row_writes += tree.set(j, v);
                stats.col_writes += self.col_trees[j].push(v);
            }
            stats.norm_writes += self.norms_tree.push(tree.root().sqrt());
            self.row_trees.push(tree);
            stats.label_writes += self.label_tree.push(y[r]);
            self.n_rows += 1;
        }
        self.ledger.add_node_writes(stats.total());
        Ok(stats)
    }

    /// Append the rows of another dataset; dimensions and task must match.
    pub fn append_rows(&mut self, new: &Dataset) -> Result<WriteStats> {
        if new.n_cols() != self.n_cols {
            return Err(Error::Dimension {
                expected: self.n_cols,
                got: new.n_cols(),
            });
        }
        if new.task() != self.task {
            return Err(Error::Schema(format!(
                "appended batch task {:?} does not match forest task {:?}",
                new.task(),
                self.task
            )));
        }
        self.append_slice(new.x_flat(), new.labels())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn ledger(&self) -> &Arc<QueryLedger> {
        &self.ledger
    }

    pub fn set_ledger(&mut self, ledger: Arc<QueryLedger>) {
        self.ledger = ledger;
    }

    /// Amplitude state of row i: xᵢ/‖xᵢ‖ with norm ‖xᵢ‖.
    pub fn row_state(&self, i: usize) -> Result<AmplitudeVector> {
        let state = self.row_trees[i].amplitude_state()?;
        self.ledger.add_state_preps(1);
        Ok(state)
    }

    /// Amplitude state of feature column j over all rows.
    pub fn col_state(&self, j: usize) -> Result<AmplitudeVector> {
        let state = self.col_trees[j].amplitude_state()?;
        self.ledger.add_state_preps(1);
        Ok(state)
    }

    /// Amplitude state of the label vector.
    pub fn label_state(&self) -> Result<AmplitudeVector> {
        let state = self.label_tree.amplitude_state()?;
        self.ledger.add_state_preps(1);
        Ok(state)
    }

    /// Amplitude state of per-row norms: ‖xᵢ‖/‖X‖_F.
    pub fn norms_state(&self) -> Result<AmplitudeVector> {
        let state = self.norms_tree.amplitude_state()?;
        self.ledger.add_state_preps(1);
        Ok(state)
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row_trees[i].root().sqrt()
    }

    pub fn col_norm(&self, j: usize) -> f64 {
        self.col_trees[j].root().sqrt()
    }

    pub fn label_norm(&self) -> f64 {
        self.label_tree.root().sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norms_tree.root().sqrt()
    }

    /// Materialize the stored data as a dataset (classical maintenance read;
    /// not a state preparation). √(x²) recovers the stored values exactly.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut x = Vec::with_capacity(self.n_rows * self.n_cols);
        for tree in &self.row_trees {
            for j in 0..self.n_cols {
                x.push(tree.leaf_value(j));
            }
        }
        let y: Vec<f64> = (0..self.n_rows).map(|i| self.label_tree.leaf_value(i)).collect();
        Dataset::from_flat(x, y, self.task, self.feature_names.clone())
    }

    pub fn check_consistency(&self) -> Result<()> {
        for (i, tree) in self.row_trees.iter().enumerate() {
            tree.check_consistency()
                .map_err(|e| Error::Invariant(format!("row tree {i}: {e}")))?;
        }
        for (j, tree) in self.col_trees.iter().enumerate() {
            tree.check_consistency()
                .map_err(|e| Error::Invariant(format!("col tree {j}: {e}")))?;
            for i in 0..self.n_rows {
                let a = self.row_trees[i].leaf_value(j);
                let b = tree.leaf_value(i);
                if a != b {
                    return Err(Error::Invariant(format!(
                        "row/col disagreement at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        self.label_tree.check_consistency()?;
        self.norms_tree.check_consistency()?;
        let frob_sq = self.norms_tree.root();
        let row_sum: f64 = self.row_trees.iter().map(|t| t.root()).sum();
        if (frob_sq - row_sum).abs() > NODE_SUM_RTOL * frob_sq.max(1.0) {
            return Err(Error::Invariant(format!(
                "norms tree root {frob_sq} disagrees with row roots {row_sum}"
            )));
        }
        Ok(())
    }

    /// Versioned tabular dump. Internal nodes are emitted when nonzero,
    /// leaves whenever populated; values use the shortest roundtrip form so
    /// parse(dump(f)) is bit-exact.
    pub fn dump(&self) -> String {
        let mut out = String::from("desq-forest\tv1\n");
        out.push_str(&format!("meta\tn_rows\t{}\n", self.n_rows));
        out.push_str(&format!("meta\tn_cols\t{}\n", self.n_cols));
        out.push_str(&format!("meta\ttask\t{}\n", self.task.name()));
        for (j, name) in self.feature_names.iter().enumerate() {
            out.push_str(&format!("meta\tfeature\t{j}\t{name}\n"));
        }
        let dump_tree = |out: &mut String, kind: &str, id: usize, tree: &KpBinaryTree| {
            out.push_str(&format!(
                "tree\t{kind}\t{id}\t{}\t{}\n",
                tree.capacity(),
                tree.len()
            ));
            let h = tree.height();
            for (t, lv) in tree.levels.iter().enumerate() {
                for (off, &v) in lv.iter().enumerate() {
                    let is_leaf = t == h;
                    if is_leaf {
                        if tree.populated[off] {
                            let sign = if tree.negative[off] { '-' } else { '+' };
                            out.push_str(&format!("node\t{kind}\t{id}\t{t}\t{off}\t{v:?}\t{sign}\n"));
                        }
                    } else if v != 0.0 {
                        out.push_str(&format!("node\t{kind}\t{id}\t{t}\t{off}\t{v:?}\t.\n"));
                    }
                }
            }
        };
        for (i, tree) in self.row_trees.iter().enumerate() {
            dump_tree(&mut out, "row", i, tree);
        }
        for (j, tree) in self.col_trees.iter().enumerate() {
            dump_tree(&mut out, "col", j, tree);
        }
        dump_tree(&mut out, "label", 0, &self.label_tree);
        dump_tree(&mut out, "norms", 0, &self.norms_tree);
        out
    }

    /// Parse a dump produced by [`KpForest::dump`]; verifies structural
    /// consistency before returning.
    pub fn parse(text: &str, ledger: Arc<QueryLedger>) -> Result<KpForest> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<forest dump>".into(),
            line: line + 1,
            msg: msg.into(),
        };
        match lines.next() {
            Some((_, "desq-forest\tv1")) => {}
            Some((i, other)) => return Err(bad(i, &format!("unsupported header {other:?}"))),
            None => return Err(bad(0, "empty dump")),
        }
        let mut n_rows = None;
        let mut n_cols = None;
        let mut task = None;
        let mut feature_names: Vec<String> = Vec::new();
        let mut row_trees: Vec<KpBinaryTree> = Vec::new();
        let mut col_trees: Vec<KpBinaryTree> = Vec::new();
        let mut label_tree = None;
        let mut norms_tree = None;

        fn tree_mut<'a>(
            kind: &str,
            id: usize,
            rows: &'a mut Vec<KpBinaryTree>,
            cols: &'a mut Vec<KpBinaryTree>,
            label: &'a mut Option<KpBinaryTree>,
            norms: &'a mut Option<KpBinaryTree>,
        ) -> Option<&'a mut KpBinaryTree> {
            match kind {
                "row" => rows.get_mut(id),
                "col" => cols.get_mut(id),
                "label" => label.as_mut(),
                "norms" => norms.as_mut(),
                _ => None,
            }
        }

        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f[0] {
                "meta" => match f.get(1).copied() {
                    Some("n_rows") => n_rows = Some(parse_num(&f, 2, i)?),
                    Some("n_cols") => n_cols = Some(parse_num(&f, 2, i)?),
                    Some("task") => {
                        task = Some(TaskKind::parse(f.get(2).copied().unwrap_or("")).ok_or_else(
                            || bad(i, "unknown task"),
                        )?)
                    }
                    Some("feature") => {
                        feature_names.push(f.get(3).copied().unwrap_or("").to_string())
                    }
                    _ => return Err(bad(i, "unknown meta row")),
                },
                "tree" => {
                    if f.len() != 5 {
                        return Err(bad(i, "tree row needs kind,id,capacity,len"));
                    }
                    let id: usize = parse_num(&f, 2, i)?;
                    let capacity: usize = parse_num(&f, 3, i)?;
                    let len: usize = parse_num(&f, 4, i)?;
                    let mut tree = KpBinaryTree::with_capacity(capacity);
                    if tree.capacity() != capacity {
                        return Err(bad(i, "capacity must be a power of two"));
                    }
                    tree.len = len;
                    match f[1] {
                        "row" => {
                            if id != row_trees.len() {
                                return Err(bad(i, "row trees out of order"));
                            }
                            row_trees.push(tree);
                        }
                        "col" => {
                            if id != col_trees.len() {
                                return Err(bad(i, "col trees out of order"));
                            }
                            col_trees.push(tree);
                        }
                        "label" => label_tree = Some(tree),
                        "norms" => norms_tree = Some(tree),
                        other => return Err(bad(i, &format!("unknown tree kind {other:?}"))),
                    }
                }
                "node" => {
                    if f.len() != 7 {
                        return Err(bad(i, "node row needs kind,id,depth,offset,value,sign"));
                    }
                    let id: usize = parse_num(&f, 2, i)?;
                    let depth: usize = parse_num(&f, 3, i)?;
                    let offset: usize = parse_num(&f, 4, i)?;
                    let value: f64 = f[5]
                        .parse()
                        .map_err(|_| bad(i, &format!("bad value {:?}", f[5])))?;
                    if !value.is_finite() || value < 0.0 {
                        return Err(bad(i, "node values must be finite and nonnegative"));
                    }
                    let tree = tree_mut(
                        f[1],
                        id,
                        &mut row_trees,
                        &mut col_trees,
                        &mut label_tree,
                        &mut norms_tree,
                    )
                    .ok_or_else(|| bad(i, "node references undeclared tree"))?;
                    if depth >= tree.levels.len() || offset >= tree.levels[depth].len() {
                        return Err(bad(i, "node outside tree bounds"));
                    }
                    tree.levels[depth][offset] = value;
                    if depth == tree.height() {
                        match f[6] {
                            "+" => {
                                tree.populated[offset] = true;
                                tree.negative[offset] = false;
                            }
                            "-" => {
                                tree.populated[offset] = true;
                                tree.negative[offset] = true;
                            }
                            other => return Err(bad(i, &format!("bad sign {other:?}"))),
                        }
                    }
                }
                other => return Err(bad(i, &format!("unknown row kind {other:?}"))),
            }
        }

        let n_rows = n_rows.ok_or_else(|| bad(0, "missing n_rows"))?;
        let n_cols = n_cols.ok_or_else(|| bad(0, "missing n_cols"))?;
        let forest = KpForest {
            n_rows,
            n_cols,
            task: task.ok_or_else(|| bad(0, "missing task"))?,
            feature_names,
            row_trees,
            col_trees,
            label_tree: label_tree.ok_or_else(|| bad(0, "missing label tree"))?,
            norms_tree: norms_tree.ok_or_else(|| bad(0, "missing norms tree"))?,
            ledger,
        };
        if forest.row_trees.len() != n_rows || forest.col_trees.len() != n_cols {
            return Err(bad(0, "tree counts disagree with meta rows"));
        }
        forest.check_consistency()?;
        Ok(forest)
    }
}

fn parse_num<T: std::str::FromStr>(fields: &[&str], idx: usize, line: usize) -> Result<T> {
    fields
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: "<forest dump>".into(),
            line: line + 1,
            msg: format!("bad numeric field {idx}"),
        })
}
