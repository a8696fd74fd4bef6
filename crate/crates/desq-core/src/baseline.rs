//! Reference axis-parallel binary decision tree.
//!
//! Greedy best-split search with midpoint thresholds between consecutive
//! sorted unique feature values; information gain (base-2 entropy) for
//! classification, MSE reduction for regression. Left branch takes
//! x_l ≤ θ_l. Ties break to the lowest feature index, then lowest threshold.

use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum AxisNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<AxisNode>,
        right: Box<AxisNode>,
    },
    Leaf {
        value: f64,
        count: usize,
        seq: usize,
    },
}

impl AxisNode {
    fn count_nodes(&self) -> usize {
        match self {
            AxisNode::Leaf { .. } => 1,
            AxisNode::Split { left, right, .. } => 1 + left.count_nodes() + right.count_nodes(),
        }
    }

    fn count_leaves(&self) -> usize {
        match self {
            AxisNode::Leaf { .. } => 1,
            AxisNode::Split { left, right, .. } => left.count_leaves() + right.count_leaves(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AxisTree {
    pub root: AxisNode,
    pub max_depth: usize,
    pub task: TaskKind,
    pub n_features: usize,
}

/// Base-2 entropy of a binary label multiset given the count of ones.
pub fn binary_entropy(ones: usize, total: usize) -> f64 {
    if total == 0 || ones == 0 || ones == total {
        return 0.0;
    }
    let p = ones as f64 / total as f64;
    let q = 1.0 - p;
    -(p * p.log2() + q * q.log2())
}

fn population_mse(sum: f64, sum_sq: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let m = n as f64;
    let mean = sum / m;
    (sum_sq / m - mean * mean).max(0.0)
}

/// The split chosen for a node, with its criterion gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exhaustive best split over midpoint thresholds; `None` when every feature
/// is constant within the node.
pub fn best_split(ds: &Dataset, idx: &[usize]) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 {
        return None;
    }
    let classification = ds.task() == TaskKind::BinaryClassification;
    let total_ones = idx.iter().filter(|&&i| ds.label(i) == 1.0).count();
    let total_sum: f64 = idx.iter().map(|&i| ds.label(i)).sum();
    let total_sum_sq: f64 = idx.iter().map(|&i| ds.label(i) * ds.label(i)).sum();
    let parent_impurity = if classification {
        binary_entropy(total_ones, n)
    } else {
        population_mse(total_sum, total_sum_sq, n)
    };

    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for feature in 0..ds.n_cols() {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (ds.row(i)[feature], ds.label(i))));
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let mut left_ones = 0usize;
        let mut left_sum = 0.0;
        let mut left_sum_sq = 0.0;
        for split_at in 1..n {
            let (v_prev, label_prev) = pairs[split_at - 1];
            if label_prev == 1.0 {
                left_ones += 1;
            }
            left_sum += label_prev;
            left_sum_sq += label_prev * label_prev;
            let v_next = pairs[split_at].0;
            if v_prev == v_next {
                continue;
            }
            let threshold = 0.5 * (v_prev + v_next);
            let n_left = split_at;
            let n_right = n - split_at;
            let child_impurity = if classification {
                let right_ones = total_ones - left_ones;
                (n_left as f64 / n as f64) * binary_entropy(left_ones, n_left)
                    + (n_right as f64 / n as f64) * binary_entropy(right_ones, n_right)
            } else {
                let right_sum = total_sum - left_sum;
                let right_sum_sq = total_sum_sq - left_sum_sq;
                (n_left as f64 / n as f64) * population_mse(left_sum, left_sum_sq, n_left)
                    + (n_right as f64 / n as f64)
                        * population_mse(right_sum, right_sum_sq, n_right)
            };
            let gain = parent_impurity - child_impurity;
            let better = match &best {
                None => true,
                Some(b) => gain > b.gain,
            };
            if better {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn leaf_value(ds: &Dataset, idx: &[usize]) -> f64 {
    let mean = idx.iter().map(|&i| ds.label(i)).sum::<f64>() / idx.len() as f64;
    match ds.task() {
        TaskKind::Regression => mean,
        TaskKind::BinaryClassification => {
            if mean < 0.5 {
                0.0
            } else {
                1.0
            }
        }
    }
}

fn grow(ds: &Dataset, idx: Vec<usize>, depth: usize, max_depth: usize, seq: &mut usize) -> AxisNode {
    let make_leaf = |idx: &[usize], seq: &mut usize| {
        let node = AxisNode::Leaf {
            value: leaf_value(ds, idx),
            count: idx.len(),
            seq: *seq,
        };
        *seq += 1;
        node
    };
    if depth >= max_depth || idx.len() < 2 {
        return make_leaf(&idx, seq);
    }
    let first = ds.label(idx[0]);
    if idx.iter().all(|&i| ds.label(i) == first) {
        return make_leaf(&idx, seq);
    }
    let Some(split) = best_split(ds, &idx) else {
        return make_leaf(&idx, seq);
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| ds.row(i)[split.feature] <= split.threshold);
    let left = grow(ds, left_idx, depth + 1, max_depth, seq);
    let right = grow(ds, right_idx, depth + 1, max_depth, seq);
    AxisNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Fit an axis-parallel tree on the given training rows.
pub fn fit_axis(ds: &Dataset, train_idx: &[usize], max_depth: usize) -> Result<AxisTree> {
    if train_idx.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut seq = 0usize;
    let root = grow(ds, train_idx.to_vec(), 0, max_depth, &mut seq);
    Ok(AxisTree {
        root,
        max_depth,
        task: ds.task(),
        n_features: ds.n_cols(),
    })
}

impl AxisTree {
    pub fn size(&self) -> usize {
        self.root.count_nodes()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.count_leaves()
    }

    /// Threshold descent; returns the leaf's value and ordinal.
    pub fn route(&self, x: &[f64]) -> Result<(f64, usize)> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut node = &self.root;
        loop {
            match node {
                AxisNode::Leaf { value, seq, .. } => return Ok((*value, *seq)),
                AxisNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.route(x)?.0)
    }

    /// Dump in the shared tree scheme; a `kind` meta row distinguishes this
    /// from the centroid tree format.
    pub fn dump(&self) -> String {
        let mut out = String::from("desq-tree\tv1\n");
        out.push_str("meta\tkind\taxis\n");
        out.push_str(&format!("meta\ttask\t{}\n", self.task.name()));
        out.push_str(&format!("meta\tdepth\t{}\n", self.max_depth));
        out.push_str(&format!("meta\tfeatures\t{}\n", self.n_features));
        fn walk(node: &AxisNode, parent: i64, depth: usize, next_id: &mut i64, out: &mut String) {
            let id = *next_id;
            *next_id += 1;
            match node {
                AxisNode::Leaf { value, count, .. } => {
                    out.push_str(&format!("node\t{id}\t{parent}\t{depth}\tleaf\t{value:?}\t{count}\n"));
                }
                AxisNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push_str(&format!(
                        "node\t{id}\t{parent}\t{depth}\tsplit\t{feature}\t{threshold:?}\n"
                    ));
                    walk(left, id, depth + 1, next_id, out);
                    walk(right, id, depth + 1, next_id, out);
                }
            }
        }
        let mut next_id = 0;
        walk(&self.root, -1, 0, &mut next_id, &mut out);
        out
    }

    pub fn parse(text: &str) -> Result<AxisTree> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<axis tree dump>".into(),
            line: line + 1,
            msg: msg.into(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "desq-tree\tv1")) => {}
            _ => return Err(bad(0, "unsupported header")),
        }
        let mut task = None;
        let mut max_depth = None;
        let mut n_features = None;
        enum Flat {
            Split { feature: usize, threshold: f64 },
            Leaf { value: f64, count: usize },
        }
        let mut flat: Vec<(Flat, i64)> = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f[0] {
                "meta" => match f[1] {
                    "kind" => {
                        if f[2] != "axis" {
                            return Err(bad(i, "expected an axis tree dump"));
                        }
                    }
                    "task" => task = TaskKind::parse(f[2]),
                    "depth" => max_depth = f[2].parse().ok(),
                    "features" => n_features = f[2].parse().ok(),
                    other => return Err(bad(i, &format!("unknown meta key {other:?}"))),
                },
                "node" => {
                    if f.len() != 7 {
                        return Err(bad(i, "node row needs 7 fields"));
                    }
                    let id: usize = f[1].parse().map_err(|_| bad(i, "bad id"))?;
                    if id != flat.len() {
                        return Err(bad(i, "node ids must be dense and ordered"));
                    }
                    let parent: i64 = f[2].parse().map_err(|_| bad(i, "bad parent"))?;
                    let node = match f[4] {
                        "leaf" => Flat::Leaf {
                            value: f[5].parse().map_err(|_| bad(i, "bad leaf value"))?,
                            count: f[6].parse().map_err(|_| bad(i, "bad count"))?,
                        },
                        "split" => Flat::Split {
                            feature: f[5].parse().map_err(|_| bad(i, "bad feature"))?,
                            threshold: f[6].parse().map_err(|_| bad(i, "bad threshold"))?,
                        },
                        other => return Err(bad(i, &format!("unknown node kind {other:?}"))),
                    };
                    flat.push((node, parent));
                }
                other => return Err(bad(i, &format!("unknown row kind {other:?}"))),
            }
        }
        if flat.is_empty() {
            return Err(bad(0, "dump has no nodes"));
        }
        let n = flat.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut root_id = None;
        for (id, (_, parent)) in flat.iter().enumerate() {
            if *parent < 0 {
                root_id = Some(id);
            } else {
                children[*parent as usize].push(id);
            }
        }
        fn materialize(
            id: usize,
            flat: &[(Flat, i64)],
            children: &[Vec<usize>],
            seq: &mut usize,
        ) -> Result<AxisNode> {
            match &flat[id].0 {
                Flat::Leaf { value, count } => {
                    let node = AxisNode::Leaf {
                        value: *value,
                        count: *count,
                        seq: *seq,
                    };
                    *seq += 1;
                    Ok(node)
                }
                Flat::Split { feature, threshold } => {
                    let kids = &children[id];
                    if kids.len() != 2 {
                        return Err(Error::Parse {
                            path: "<axis tree dump>".into(),
                            line: 0,
                            msg: "split node must have exactly two children".into(),
                        });
                    }
                    Ok(AxisNode::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left: Box::new(materialize(kids[0], flat, children, seq)?),
                        right: Box::new(materialize(kids[1], flat, children, seq)?),
                    })
                }
            }
        }
        let mut seq = 0usize;
        let root = materialize(
            root_id.ok_or_else(|| bad(0, "missing root"))?,
            &flat,
            &children,
            &mut seq,
        )?;
        Ok(AxisTree {
            root,
            max_depth: max_depth.ok_or_else(|| bad(0, "missing depth"))?,
            task: task.ok_or_else(|| bad(0, "missing task"))?,
            n_features: n_features.ok_or_else(|| bad(0, "missing feature count"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds_1d(x: &[f64], y: &[f64], task: TaskKind) -> Dataset {
        Dataset::from_flat(x.to_vec(), y.to_vec(), task, vec!["x".into()]).unwrap()
    }

    #[test]
    fn perfect_one_dimensional_split() {
        let ds = ds_1d(
            &[0.0, 1.0, 2.0, 3.0],
            &[0.0, 0.0, 1.0, 1.0],
            TaskKind::BinaryClassification,
        );
        let idx: Vec<usize> = (0..4).collect();
        let split = best_split(&ds, &idx).unwrap();
        assert_eq!(split.feature, 0);
        assert_abs_diff_eq!(split.threshold, 1.5);
        assert_abs_diff_eq!(split.gain, 1.0, epsilon = 1e-12);
        let tree = fit_axis(&ds, &idx, 1).unwrap();
        for &i in &idx {
            assert_eq!(tree.predict(ds.row(i)).unwrap(), ds.label(i));
        }
        assert_eq!(tree.size(), 3);
    }

    #[test]
    fn pure_node_becomes_leaf() {
        let ds = ds_1d(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0], TaskKind::BinaryClassification);
        let tree = fit_axis(&ds, &[0, 1, 2], 3).unwrap();
        assert_eq!(tree.size(), 1);
        assert_eq!(tree.predict(&[5.0]).unwrap(), 1.0);
    }

    #[test]
    fn boundary_value_goes_left() {
        let ds = ds_1d(
            &[0.0, 1.0, 2.0, 3.0],
            &[0.0, 0.0, 1.0, 1.0],
            TaskKind::BinaryClassification,
        );
        let tree = fit_axis(&ds, &[0, 1, 2, 3], 1).unwrap();
        if let AxisNode::Split { threshold, .. } = &tree.root {
            assert_eq!(tree.predict(&[*threshold]).unwrap(), 0.0);
        } else {
            panic!("expected a split at the root");
        }
    }

    #[test]
    fn depth_zero_gives_constant_prediction() {
        let ds = ds_1d(&[0.0, 1.0], &[0.25, 0.75], TaskKind::Regression);
        let tree = fit_axis(&ds, &[0, 1], 0).unwrap();
        assert_eq!(tree.size(), 1);
        assert_abs_diff_eq!(tree.predict(&[42.0]).unwrap(), 0.5);
    }

    /// Independent oracle: recompute the criterion naively for every
    /// candidate (feature, midpoint) pair and take the argmax with the same
    /// tie rule.
    fn exhaustive_oracle(ds: &Dataset, idx: &[usize]) -> Option<SplitChoice> {
        let classification = ds.task() == TaskKind::BinaryClassification;
        let n = idx.len() as f64;
        let impurity = |rows: &[usize]| -> f64 {
            if rows.is_empty() {
                return 0.0;
            }
            if classification {
                let ones = rows.iter().filter(|&&i| ds.label(i) == 1.0).count();
                binary_entropy(ones, rows.len())
            } else {
                let m = rows.len() as f64;
                let mean = rows.iter().map(|&i| ds.label(i)).sum::<f64>() / m;
                rows.iter()
                    .map(|&i| (ds.label(i) - mean).powi(2))
                    .sum::<f64>()
                    / m
            }
        };
        let parent = impurity(idx);
        let mut best: Option<SplitChoice> = None;
        for feature in 0..ds.n_cols() {
            let mut values: Vec<f64> = idx.iter().map(|&i| ds.row(i)[feature]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            for pair in values.windows(2) {
                let threshold = 0.5 * (pair[0] + pair[1]);
                let left: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| ds.row(i)[feature] <= threshold)
                    .collect();
                let right: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| ds.row(i)[feature] > threshold)
                    .collect();
                let gain = parent
                    - (left.len() as f64 / n) * impurity(&left)
                    - (right.len() as f64 / n) * impurity(&right);
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain + 1e-15,
                };
                if better {
                    best = Some(SplitChoice {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    #[test]
    fn split_matches_exhaustive_oracle_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..20 {
            let n = 8 + (case % 5) * 14; // up to 64
            let d = 1 + case % 4;
            let classification = case % 2 == 0;
            let x: Vec<f64> = (0..n * d).map(|_| (rng.random::<f64>() * 8.0).round()).collect();
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    if classification {
                        (rng.random::<f64>() < 0.5) as u8 as f64
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let task = if classification {
                TaskKind::BinaryClassification
            } else {
                TaskKind::Regression
            };
            let ds = Dataset::from_flat(
                x,
                y,
                task,
                (0..d).map(|j| format!("f{j}")).collect(),
            )
            .unwrap();
            let idx: Vec<usize> = (0..n).collect();
            let got = best_split(&ds, &idx);
            let want = exhaustive_oracle(&ds, &idx);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    assert_eq!(g.feature, w.feature, "case {case}");
                    assert_abs_diff_eq!(g.threshold, w.threshold, epsilon = 1e-12);
                    assert_abs_diff_eq!(g.gain, w.gain, epsilon = 1e-9);
                }
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn optimal_split_never_increases_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 40;
            let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() < 0.4) as u8 as f64).collect();
            let ds = Dataset::from_flat(
                x,
                y.clone(),
                TaskKind::BinaryClassification,
                vec!["a".into(), "b".into()],
            )
            .unwrap();
            let idx: Vec<usize> = (0..n).collect();
            if let Some(split) = best_split(&ds, &idx) {
                let ones = y.iter().filter(|&&v| v == 1.0).count();
                let parent = binary_entropy(ones, n);
                assert!(split.gain >= -1e-12, "gain {}", split.gain);
                assert!(parent - split.gain <= parent + 1e-12);
            }
        }
    }

    #[test]
    fn dump_parse_roundtrip() {
        let ds = ds_1d(
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            &[0.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            TaskKind::BinaryClassification,
        );
        let tree = fit_axis(&ds, &[0, 1, 2, 3, 4, 5], 2).unwrap();
        let parsed = AxisTree::parse(&tree.dump()).unwrap();
        assert_eq!(parsed.dump(), tree.dump());
        for i in 0..6 {
            assert_eq!(
                parsed.route(ds.row(i)).unwrap(),
                tree.route(ds.row(i)).unwrap()
            );
        }
    }
}
