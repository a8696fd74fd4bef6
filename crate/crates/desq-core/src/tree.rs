//! Tree lifecycle: growth to depth D, leaf labeling, inference, retraining.
//!
//! Feature weights are computed once at the root, then every node is split
//! by supervised clustering until the depth cap or a stopping rule fires
//! (node smaller than k, label-pure node, or a degenerate split that leaves
//! fewer than two nonempty children). Leaves carry the cluster's mean label,
//! thresholded at 0.5 for classification. Retraining appends the new batch
//! to the KP-tree forest and rebuilds over the combined rows, so the load
//! cost scales with the batch while the algorithmic cost matches a fresh
//! build.

use crate::cluster::{
    cluster_node, weighted_distance, weighted_inner_product, AssignmentRule, ClusterConfig,
};
use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::kptree::{AmplitudeVector, KpForest};
use crate::qestimate::{
    derive_seed, eps_for_scaled_target, inner_product, EstimationMethod, EstimatorConfig,
    LedgerSnapshot, Phase,
};
use crate::weights::{compute_weights, no_weight, FeatureWeights};

/// Whether splits use correlation weights or the uniform no-weight ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Correlation,
    Uniform,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Correlation => "correlation",
            Weighting::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "correlation" | "weighted" => Some(Weighting::Correlation),
            "uniform" | "no-weight" => Some(Weighting::Uniform),
            _ => None,
        }
    }
}

/// One tree node: an anchor centroid with children, or a labeled leaf.
#[derive(Debug, Clone)]
pub struct Node {
    pub centroid: Vec<f64>,
    pub children: Vec<Node>,
    pub leaf_label: Option<f64>,
    pub train_count: usize,
    pub train_indices: Option<Vec<usize>>,
    leaf_seq: Option<usize>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn count_nodes(&self) -> usize {
        1 + self.children.iter().map(Node::count_nodes).sum::<usize>()
    }

    fn count_leaves(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(Node::count_leaves).sum()
        }
    }

    fn max_depth(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self.children.iter().map(Node::max_depth).max().unwrap_or(0)
        }
    }
}

/// A trained centroid tree.
#[derive(Debug, Clone)]
pub struct DesqTree {
    pub root: Node,
    pub depth_cap: usize,
    pub k: usize,
    pub task: TaskKind,
    pub weighting: Weighting,
    pub weights: FeatureWeights,
    pub config: ClusterConfig,
    pub ledger_at_fit: LedgerSnapshot,
    /// Number of clustering iterations whose exact weighted objective rose
    /// relative to the previous one (always 0 for exact Lloyd steps).
    pub lloyd_violations: usize,
}

/// Outcome of routing one example down the tree.
#[derive(Debug, Clone, Copy)]
pub struct Routing {
    pub label: f64,
    /// Ordinal of the reached leaf in depth-first order.
    pub leaf: usize,
    /// Number of centroid scorings performed (≤ k·D).
    pub evaluations: usize,
}

/// Mean label of a cluster; simulated modes estimate it from the inner
/// product of the label state with the cluster's characteristic state, with
/// error at most ε₃. Classification thresholds the mean at 0.5 (an exact
/// 0.5 maps to 1).
pub fn leaf_label(
    cluster: &[usize],
    ds: &Dataset,
    forest: Option<&KpForest>,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mean = if cfg.method == EstimationMethod::Exact {
        cluster.iter().map(|&i| ds.label(i)).sum::<f64>() / cluster.len() as f64
    } else {
        let forest = forest
            .ok_or_else(|| Error::Config("simulated leaf labels need a KP-tree forest".into()))?;
        let label_norm = forest.label_norm();
        if label_norm <= 0.0 {
            0.0
        } else {
            let xi = AmplitudeVector::characteristic(cluster, forest.n_rows())?;
            let y = forest.label_state()?;
            let eps = eps_for_scaled_target(cfg.eps3, label_norm, cluster.len());
            let est = inner_product(&y, &xi, eps, cfg, forest.ledger())?;
            est.value / (cluster.len() as f64).sqrt()
        }
    };
    Ok(match ds.task() {
        TaskKind::Regression => mean,
        TaskKind::BinaryClassification => {
            if mean < 0.5 {
                0.0
            } else {
                1.0
            }
        }
    })
}

fn labels_pure(cluster: &[usize], ds: &Dataset) -> bool {
    let first = ds.label(cluster[0]);
    cluster.iter().all(|&i| ds.label(i) == first)
}

fn grow(
    points: Vec<usize>,
    anchor: Vec<f64>,
    level: usize,
    path: &mut Vec<u64>,
    ds: &Dataset,
    forest: Option<&KpForest>,
    w: &FeatureWeights,
    cc: &ClusterConfig,
    depth_cap: usize,
    lloyd_violations: &mut usize,
) -> Result<Node> {
    let mut node = Node {
        centroid: anchor,
        children: Vec::new(),
        leaf_label: None,
        train_count: points.len(),
        train_indices: Some(points),
        leaf_seq: None,
    };
    let points = node.train_indices.as_ref().expect("just set");
    let too_small = if cc.split_undersized {
        points.len() < 2
    } else {
        points.len() < cc.k
    };
    if level >= depth_cap || too_small || labels_pure(points, ds) {
        return Ok(node);
    }
    let seed = derive_seed(cc.estimator.seed, path);
    let outcome = cluster_node(points, ds, forest, w, cc, seed)?;
    for pair in outcome.trace.windows(2) {
        if pair[1].objective > pair[0].objective + 1e-9 * pair[0].objective.max(1.0) {
            *lloyd_violations += 1;
        }
    }
    let nonempty: Vec<usize> = (0..outcome.centroids.k())
        .filter(|&j| !outcome.assignment.clusters[j].is_empty())
        .collect();
    if nonempty.len() < 2 {
        return Ok(node);
    }
    for (child_pos, &j) in nonempty.iter().enumerate() {
        path.push(child_pos as u64);
        let child = grow(
            outcome.assignment.clusters[j].clone(),
            outcome.centroids.vectors[j].clone(),
            level + 1,
            path,
            ds,
            forest,
            w,
            cc,
            depth_cap,
            lloyd_violations,
        )?;
        path.pop();
        node.children.push(child);
    }
    Ok(node)
}

fn label_leaves(
    node: &mut Node,
    ds: &Dataset,
    forest: Option<&KpForest>,
    cfg: &EstimatorConfig,
    next_seq: &mut usize,
) -> Result<()> {
    if node.is_leaf() {
        let points = node
            .train_indices
            .as_ref()
            .ok_or_else(|| Error::Invariant("leaf without training indices".into()))?;
        node.leaf_label = Some(leaf_label(points, ds, forest, cfg)?);
        node.leaf_seq = Some(*next_seq);
        *next_seq += 1;
        return Ok(());
    }
    for child in &mut node.children {
        label_leaves(child, ds, forest, cfg, next_seq)?;
    }
    Ok(())
}

fn fit_inner(
    ds: &Dataset,
    forest: &KpForest,
    cc: &ClusterConfig,
    depth_cap: usize,
    weighting: Weighting,
) -> Result<DesqTree> {
    cc.validate()?;
    if depth_cap == 0 {
        return Err(Error::Config("tree depth must be >= 1".into()));
    }
    if ds.n_rows() != forest.n_rows() || ds.n_cols() != forest.n_cols() {
        return Err(Error::Dimension {
            expected: forest.n_rows() * forest.n_cols(),
            got: ds.n_rows() * ds.n_cols(),
        });
    }
    let w = match weighting {
        Weighting::Correlation => compute_weights(forest, ds, &cc.estimator)?,
        Weighting::Uniform => no_weight(ds.n_cols()),
    };
    forest.ledger().set_phase(Phase::Cluster);
    let all: Vec<usize> = (0..ds.n_rows()).collect();
    let node_mean: Vec<f64> = (0..ds.n_cols())
        .map(|j| all.iter().map(|&i| ds.row(i)[j]).sum::<f64>() / ds.n_rows() as f64)
        .collect();
    let mut path = vec![0u64];
    let mut lloyd_violations = 0usize;
    let mut root = grow(
        all,
        node_mean,
        0,
        &mut path,
        ds,
        Some(forest),
        &w,
        cc,
        depth_cap,
        &mut lloyd_violations,
    )?;
    forest.ledger().set_phase(Phase::Leaf);
    let mut seq = 0usize;
    label_leaves(&mut root, ds, Some(forest), &cc.estimator, &mut seq)?;
    Ok(DesqTree {
        root,
        depth_cap,
        k: cc.k,
        task: ds.task(),
        weighting,
        weights: w,
        config: cc.clone(),
        ledger_at_fit: forest.ledger().snapshot(),
        lloyd_violations,
    })
}

/// Grow a tree over the dataset backing `forest`.
pub fn fit(
    ds: &Dataset,
    forest: &KpForest,
    cc: &ClusterConfig,
    depth_cap: usize,
    weighting: Weighting,
) -> Result<DesqTree> {
    fit_inner(ds, forest, cc, depth_cap, weighting)
}

/// Append a nonempty batch to the forest (charged to the retrain phase) and
/// rebuild the tree over all rows with freshly recomputed weights.
pub fn retrain(
    prev: &DesqTree,
    forest: &mut KpForest,
    new: &Dataset,
    cc: &ClusterConfig,
    depth_cap: usize,
) -> Result<DesqTree> {
    if new.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if new.n_cols() != forest.n_cols() {
        return Err(Error::Dimension {
            expected: forest.n_cols(),
            got: new.n_cols(),
        });
    }
    forest.ledger().set_phase(Phase::Retrain);
    forest.append_rows(new)?;
    let combined = forest.to_dataset()?;
    fit_inner(&combined, forest, cc, depth_cap, prev.weighting)
}

impl DesqTree {
    pub fn size(&self) -> usize {
        self.root.count_nodes()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.count_leaves()
    }

    pub fn max_depth(&self) -> usize {
        self.root.max_depth()
    }

    /// Route a standardized example to a leaf, scoring children with the
    /// rule the tree was trained under.
    pub fn route(&self, x: &[f64]) -> Result<Routing> {
        if x.len() != self.weights.dim() {
            return Err(Error::Dimension {
                expected: self.weights.dim(),
                got: x.len(),
            });
        }
        let mut node = &self.root;
        let mut evaluations = 0usize;
        while !node.is_leaf() {
            let mut best = 0usize;
            let mut best_score = f64::INFINITY;
            for (j, child) in node.children.iter().enumerate() {
                let score = match self.config.assignment_rule {
                    AssignmentRule::MinWeightedDistance => {
                        weighted_distance(x, &child.centroid, &self.weights)?
                    }
                    AssignmentRule::MaxWeightedInnerProduct => {
                        -weighted_inner_product(x, &child.centroid, &self.weights)?
                    }
                };
                evaluations += 1;
                if score < best_score {
                    best_score = score;
                    best = j;
                }
            }
            node = &node.children[best];
        }
        Ok(Routing {
            label: node
                .leaf_label
                .ok_or_else(|| Error::Invariant("leaf missing label".into()))?,
            leaf: node
                .leaf_seq
                .ok_or_else(|| Error::Invariant("leaf missing ordinal".into()))?,
            evaluations,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.route(x)?.label)
    }

    /// Versioned tabular dump of structure, weights, and configuration.
    pub fn dump(&self) -> String {
        let mut out = String::from("desq-tree\tv1\n");
        out.push_str("meta\tkind\tcentroid\n");
        out.push_str(&format!("meta\ttask\t{}\n", self.task.name()));
        out.push_str(&format!("meta\tdepth\t{}\n", self.depth_cap));
        out.push_str(&format!("meta\tk\t{}\n", self.k));
        out.push_str(&format!("meta\tweighting\t{}\n", self.weighting.name()));
        out.push_str(&format!("meta\trule\t{}\n", self.config.assignment_rule.name()));
        out.push_str(&format!("meta\tmax_iters\t{}\n", self.config.max_iters));
        out.push_str(&format!("meta\ttol\t{:?}\n", self.config.tol));
        out.push_str(&format!("meta\tempty_policy\t{}\n", self.config.empty_policy.name()));
        out.push_str(&format!("meta\tsplit_undersized\t{}\n", self.config.split_undersized));
        let e = &self.config.estimator;
        out.push_str(&format!(
            "meta\testimator\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\n",
            e.method, e.eps1, e.eps2, e.eps3, e.delta_cap, e.delta_kmeans, e.seed
        ));
        for (j, (raw, norm)) in self.weights.raw.iter().zip(&self.weights.normalized).enumerate() {
            out.push_str(&format!("weight\t{j}\t{raw:?}\t{norm:?}\n"));
        }
        fn walk(node: &Node, parent: i64, depth: usize, next_id: &mut i64, out: &mut String) {
            let id = *next_id;
            *next_id += 1;
            let label = node
                .leaf_label
                .map(|v| format!("{v:?}"))
                .unwrap_or_else(|| ".".into());
            let centroid = node
                .centroid
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join("\t");
            out.push_str(&format!(
                "node\t{id}\t{parent}\t{depth}\t{label}\t{}\t{centroid}\n",
                node.train_count
            ));
            for child in &node.children {
                walk(child, id, depth + 1, next_id, out);
            }
        }
        let mut next_id = 0;
        walk(&self.root, -1, 0, &mut next_id, &mut out);
        out
    }

    /// Parse a dump produced by [`DesqTree::dump`].
    pub fn parse(text: &str) -> Result<DesqTree> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<tree dump>".into(),
            line: line + 1,
            msg: msg.into(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "desq-tree\tv1")) => {}
            _ => return Err(bad(0, "unsupported header")),
        }
        let mut task = None;
        let mut depth_cap = None;
        let mut k = None;
        let mut weighting = None;
        let mut cc = ClusterConfig::default();
        let mut raw_w: Vec<f64> = Vec::new();
        let mut norm_w: Vec<f64> = Vec::new();
        // id -> (node, parent)
        let mut flat: Vec<(Node, i64)> = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f[0] {
                "meta" => match f[1] {
                    "kind" => {
                        if f[2] != "centroid" {
                            return Err(bad(i, "expected a centroid tree dump"));
                        }
                    }
                    "task" => task = TaskKind::parse(f[2]),
                    "depth" => depth_cap = f[2].parse().ok(),
                    "k" => {
                        k = f[2].parse().ok();
                        cc.k = k.ok_or_else(|| bad(i, "bad k"))?;
                    }
                    "weighting" => weighting = Weighting::parse(f[2]),
                    "rule" => {
                        cc.assignment_rule =
                            AssignmentRule::parse(f[2]).ok_or_else(|| bad(i, "bad rule"))?
                    }
                    "max_iters" => cc.max_iters = f[2].parse().map_err(|_| bad(i, "bad iters"))?,
                    "tol" => cc.tol = f[2].parse().map_err(|_| bad(i, "bad tol"))?,
                    "empty_policy" => {
                        cc.empty_policy = crate::cluster::EmptyClusterPolicy::parse(f[2])
                            .ok_or_else(|| bad(i, "bad empty policy"))?
                    }
                    "split_undersized" => {
                        cc.split_undersized =
                            f[2].parse().map_err(|_| bad(i, "bad split_undersized"))?
                    }
                    "estimator" => {
                        if f.len() != 9 {
                            return Err(bad(i, "estimator row needs 7 fields"));
                        }
                        cc.estimator = EstimatorConfig {
                            method: match f[2] {
                                "exact" => EstimationMethod::Exact,
                                "chernoff" => EstimationMethod::Chernoff,
                                "ae" => EstimationMethod::AmplitudeEstimation,
                                other => return Err(bad(i, &format!("bad method {other:?}"))),
                            },
                            eps1: f[3].parse().map_err(|_| bad(i, "bad eps1"))?,
                            eps2: f[4].parse().map_err(|_| bad(i, "bad eps2"))?,
                            eps3: f[5].parse().map_err(|_| bad(i, "bad eps3"))?,
                            delta_cap: f[6].parse().map_err(|_| bad(i, "bad delta"))?,
                            delta_kmeans: f[7].parse().map_err(|_| bad(i, "bad delta_kmeans"))?,
                            seed: f[8].parse().map_err(|_| bad(i, "bad seed"))?,
                        };
                    }
                    other => return Err(bad(i, &format!("unknown meta key {other:?}"))),
                },
                "weight" => {
                    raw_w.push(f[2].parse().map_err(|_| bad(i, "bad raw weight"))?);
                    norm_w.push(f[3].parse().map_err(|_| bad(i, "bad normalized weight"))?);
                }
                "node" => {
                    if f.len() < 6 {
                        return Err(bad(i, "node row too short"));
                    }
                    let id: usize = f[1].parse().map_err(|_| bad(i, "bad node id"))?;
                    if id != flat.len() {
                        return Err(bad(i, "node ids must be dense and in dump order"));
                    }
                    let parent: i64 = f[2].parse().map_err(|_| bad(i, "bad parent id"))?;
                    let leaf_label = if f[4] == "." {
                        None
                    } else {
                        Some(f[4].parse().map_err(|_| bad(i, "bad leaf label"))?)
                    };
                    let train_count: usize =
                        f[5].parse().map_err(|_| bad(i, "bad train count"))?;
                    let centroid: Vec<f64> = f[6..]
                        .iter()
                        .map(|s| s.parse().map_err(|_| bad(i, "bad centroid value")))
                        .collect::<Result<_>>()?;
                    flat.push((
                        Node {
                            centroid,
                            children: Vec::new(),
                            leaf_label,
                            train_count,
                            train_indices: None,
                            leaf_seq: None,
                        },
                        parent,
                    ));
                }
                other => return Err(bad(i, &format!("unknown row kind {other:?}"))),
            }
        }
        if flat.is_empty() {
            return Err(bad(0, "dump has no nodes"));
        }
        // ids are dense preorder; rebuild via an index arena
        let n = flat.len();
        let mut children_ids: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut root_id = None;
        for (id, (_, parent)) in flat.iter().enumerate() {
            if *parent < 0 {
                if root_id.is_some() {
                    return Err(bad(0, "multiple roots"));
                }
                root_id = Some(id);
            } else {
                let p = *parent as usize;
                if p >= id {
                    return Err(bad(0, "parent must precede child"));
                }
                children_ids[p].push(id);
            }
        }
        fn materialize(
            id: usize,
            nodes: &mut [Option<Node>],
            children_ids: &[Vec<usize>],
        ) -> Node {
            let mut node = nodes[id].take().expect("each id materialized once");
            for &c in &children_ids[id] {
                node.children.push(materialize(c, nodes, children_ids));
            }
            node
        }
        let mut arena: Vec<Option<Node>> = flat.into_iter().map(|(n, _)| Some(n)).collect();
        let root_id = root_id.ok_or_else(|| bad(0, "missing root node"))?;
        let mut root = materialize(root_id, &mut arena, &children_ids);
        fn assign_seq(node: &mut Node, next: &mut usize) {
            if node.is_leaf() {
                node.leaf_seq = Some(*next);
                *next += 1;
            }
            for child in &mut node.children {
                assign_seq(child, next);
            }
        }
        let mut seq = 0;
        assign_seq(&mut root, &mut seq);
        let task = task.ok_or_else(|| bad(0, "missing task"))?;
        let weights = FeatureWeights {
            raw: raw_w,
            normalized: norm_w,
            per_feature: Vec::new(),
            label: Default::default(),
        };
        if weights.raw.is_empty() {
            return Err(bad(0, "missing weight rows"));
        }
        Ok(DesqTree {
            root,
            depth_cap: depth_cap.ok_or_else(|| bad(0, "missing depth"))?,
            k: k.ok_or_else(|| bad(0, "missing k"))?,
            task,
            weighting: weighting.ok_or_else(|| bad(0, "missing weighting"))?,
            weights,
            config: cc,
            ledger_at_fit: LedgerSnapshot::default(),
            lloyd_violations: 0,
        })
    }
}
