//! Supervised weighted clustering of one tree node into k children.
//!
//! Assignment scores examples against weighted centroids either by the
//! weighted Euclidean distance √(Σ w_l(x_l−c_l)²) or by the weighted inner
//! product Σ w_l·x_l·c_l. Exact mode evaluates scores directly; simulated
//! modes route the inner product (and the cross term of the distance) through
//! the noisy estimator on row states versus encoded weighted centroids, and
//! rebuild centroid coordinates from column-state/characteristic-vector inner
//! products with a per-coordinate ℓ∞ guarantee of ε₂. A nonzero δ relaxes the
//! assignment to δ-k-means: any centroid scoring within δ of the best may be
//! chosen (seeded).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kptree::{AmplitudeVector, KpForest};
use crate::qestimate::{
    argbest_values, eps_for_scaled_target, inner_product, ArgbestMode, EstimationMethod,
    EstimatorConfig, NoisyEstimate,
};
use crate::weights::FeatureWeights;

/// How examples are matched to centroids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignmentRule {
    #[default]
    MinWeightedDistance,
    MaxWeightedInnerProduct,
}

impl AssignmentRule {
    pub fn name(self) -> &'static str {
        match self {
            AssignmentRule::MinWeightedDistance => "distance",
            AssignmentRule::MaxWeightedInnerProduct => "inner-product",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "distance" | "min-distance" => Some(AssignmentRule::MinWeightedDistance),
            "inner-product" | "max-inner-product" => Some(AssignmentRule::MaxWeightedInnerProduct),
            _ => None,
        }
    }
}

/// Centroid seeding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    #[default]
    KMeansPlusPlus,
    Random,
}

/// What happens to a cluster that loses all members during an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyClusterPolicy {
    /// Reseed at the node point farthest from the cluster's current centroid.
    #[default]
    Repair,
    /// Remove the centroid; the node ends up with fewer than k children.
    Drop,
}

impl EmptyClusterPolicy {
    pub fn name(self) -> &'static str {
        match self {
            EmptyClusterPolicy::Repair => "repair",
            EmptyClusterPolicy::Drop => "drop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "repair" => Some(EmptyClusterPolicy::Repair),
            "drop" => Some(EmptyClusterPolicy::Drop),
            _ => None,
        }
    }
}

/// Per-node clustering configuration.
#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub k: usize,
    /// Iteration cap K.
    pub max_iters: usize,
    /// Convergence threshold on max centroid ℓ2 movement.
    pub tol: f64,
    pub assignment_rule: AssignmentRule,
    pub init: InitMethod,
    pub empty_policy: EmptyClusterPolicy,
    /// Split nodes smaller than k anyway (k clamps to the node size)
    /// instead of turning them into leaves.
    pub split_undersized: bool,
    pub estimator: EstimatorConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 2,
            max_iters: 100,
            tol: 1e-4,
            assignment_rule: AssignmentRule::MinWeightedDistance,
            init: InitMethod::KMeansPlusPlus,
            empty_policy: EmptyClusterPolicy::Repair,
            split_undersized: false,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be >= 2, got {}", self.k)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if self.tol < 0.0 {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        self.estimator.validate()
    }
}

/// Cluster anchors plus their Hadamard products with the weight vector.
#[derive(Debug, Clone)]
pub struct Centroids {
    pub vectors: Vec<Vec<f64>>,
    pub weighted: Vec<Vec<f64>>,
}

impl Centroids {
    pub fn from_vectors(vectors: Vec<Vec<f64>>, w: &FeatureWeights) -> Self {
        let weighted = vectors
            .iter()
            .map(|c| c.iter().zip(&w.normalized).map(|(v, wl)| v * wl).collect())
            .collect();
        Centroids { vectors, weighted }
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }
}

/// Example-to-cluster mapping; `clusters[j]` holds dataset row indices (the
/// characteristic vector of child j as an explicit index set).
#[derive(Debug, Clone)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub clusters: Vec<Vec<usize>>,
}

/// Per-iteration clustering diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub objective: f64,
    pub movement: f64,
    pub repaired: bool,
}

/// Result of clustering one node.
#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub centroids: Centroids,
    pub assignment: Assignment,
    pub trace: Vec<IterationStats>,
}

/// Weighted Euclidean distance √(Σ w_l (x_l − c_l)²) under normalized weights.
pub fn weighted_distance(x: &[f64], c: &[f64], w: &FeatureWeights) -> Result<f64> {
    if x.len() != c.len() || x.len() != w.normalized.len() {
        return Err(Error::Dimension {
            expected: w.normalized.len(),
            got: if x.len() != w.normalized.len() { x.len() } else { c.len() },
        });
    }
    let mut sum = 0.0;
    for ((a, b), wl) in x.iter().zip(c).zip(&w.normalized) {
        let d = a - b;
        sum += wl * d * d;
    }
    Ok(sum.sqrt())
}

/// Weighted inner product Σ w_l·x_l·c_l = ⟨x, w∘c⟩.
pub fn weighted_inner_product(x: &[f64], c: &[f64], w: &FeatureWeights) -> Result<f64> {
    if x.len() != c.len() || x.len() != w.normalized.len() {
        return Err(Error::Dimension {
            expected: w.normalized.len(),
            got: if x.len() != w.normalized.len() { x.len() } else { c.len() },
        });
    }
    Ok(x.iter()
        .zip(c)
        .zip(&w.normalized)
        .map(|((a, b), wl)| wl * a * b)
        .sum())
}

/// Noisy weighted inner product: row state of example `i` against the encoded
/// weighted centroid, through the configured estimator. Zero-norm operands
/// short-circuit to an exact 0 (nothing to estimate).
pub fn weighted_inner_product_estimate(
    forest: &KpForest,
    i: usize,
    weighted_centroid: &[f64],
    eps: f64,
    cfg: &EstimatorConfig,
) -> Result<NoisyEstimate> {
    if forest.row_norm(i) <= 0.0 {
        return Ok(NoisyEstimate::exact(0.0));
    }
    let cw = match AmplitudeVector::encode(weighted_centroid) {
        Ok(v) => v,
        Err(Error::ZeroNorm(_)) => return Ok(NoisyEstimate::exact(0.0)),
        Err(e) => return Err(e),
    };
    let x = forest.row_state(i)?;
    inner_product(&x, &cw, eps, cfg, forest.ledger())
}

/// Seed k (clamped to |points|) distinct centroids, by k-means++ over the
/// weighted distance or uniformly at random.
pub fn init_centroids(
    points: &[usize],
    ds: &Dataset,
    w: &FeatureWeights,
    cc: &ClusterConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Centroids> {
    if points.is_empty() {
        return Err(Error::EmptyNode);
    }
    let k = cc.k.min(points.len());
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    match cc.init {
        InitMethod::Random => {
            let mut pool: Vec<usize> = points.to_vec();
            for _ in 0..k {
                let pick = rng.random_range(0..pool.len());
                chosen.push(pool.swap_remove(pick));
            }
        }
        InitMethod::KMeansPlusPlus => {
            chosen.push(points[rng.random_range(0..points.len())]);
            let mut dist_sq: Vec<f64> = points
                .iter()
                .map(|&p| {
                    let d = weighted_distance(ds.row(p), ds.row(chosen[0]), w).unwrap_or(0.0);
                    d * d
                })
                .collect();
            while chosen.len() < k {
                let total: f64 = dist_sq.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut pick = points.len() - 1;
                    for (pos, &d2) in dist_sq.iter().enumerate() {
                        target -= d2;
                        if target <= 0.0 {
                            pick = pos;
                            break;
                        }
                    }
                    points[pick]
                } else {
                    // all remaining mass is on already-chosen coordinates;
                    // fall back to the first unchosen index
                    *points
                        .iter()
                        .find(|p| !chosen.contains(p))
                        .unwrap_or(&points[0])
                };
                chosen.push(next);
                for (pos, &p) in points.iter().enumerate() {
                    let d = weighted_distance(ds.row(p), ds.row(next), w)?;
                    dist_sq[pos] = dist_sq[pos].min(d * d);
                }
            }
        }
    }
    let vectors: Vec<Vec<f64>> = chosen.iter().map(|&p| ds.row(p).to_vec()).collect();
    Ok(Centroids::from_vectors(vectors, w))
}

/// Score every centroid for example `i`; lower-is-better for the distance
/// rule, higher-is-better for the inner-product rule.
fn score_example(
    i: usize,
    ds: &Dataset,
    forest: Option<&KpForest>,
    cents: &Centroids,
    w: &FeatureWeights,
    cc: &ClusterConfig,
) -> Result<Vec<f64>> {
    let row = ds.row(i);
    let exact = cc.estimator.method == EstimationMethod::Exact;
    let mut scores = Vec::with_capacity(cents.k());
    for (c, cw) in cents.vectors.iter().zip(&cents.weighted) {
        let score = match cc.assignment_rule {
            AssignmentRule::MaxWeightedInnerProduct => {
                if exact {
                    weighted_inner_product(row, c, w)?
                } else {
                    let forest = forest.ok_or_else(|| {
                        Error::Config("simulated assignment needs a KP-tree forest".into())
                    })?;
                    weighted_inner_product_estimate(forest, i, cw, cc.estimator.eps1, &cc.estimator)?
                        .value
                }
            }
            AssignmentRule::MinWeightedDistance => {
                if exact {
                    weighted_distance(row, c, w)?
                } else {
                    // estimate only the cross term; the self terms are
                    // classical given the stored weights and centroids
                    let forest = forest.ok_or_else(|| {
                        Error::Config("simulated assignment needs a KP-tree forest".into())
                    })?;
                    let cross = weighted_inner_product_estimate(
                        forest,
                        i,
                        cw,
                        cc.estimator.eps1,
                        &cc.estimator,
                    )?
                    .value;
                    let self_x: f64 =
                        row.iter().zip(&w.normalized).map(|(v, wl)| wl * v * v).sum();
                    let self_c: f64 = c.iter().zip(&w.normalized).map(|(v, wl)| wl * v * v).sum();
                    (self_x - 2.0 * cross + self_c).max(0.0).sqrt()
                }
            }
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Assign each node example to a centroid. With δ = 0 the best score wins
/// (ties to the lowest index); with δ > 0 a seeded uniform choice is made
/// among all centroids scoring within δ of the best.
pub fn assign(
    points: &[usize],
    ds: &Dataset,
    forest: Option<&KpForest>,
    cents: &Centroids,
    w: &FeatureWeights,
    cc: &ClusterConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Assignment> {
    let mode = match cc.assignment_rule {
        AssignmentRule::MinWeightedDistance => ArgbestMode::Min,
        AssignmentRule::MaxWeightedInnerProduct => ArgbestMode::Max,
    };
    let delta = cc.estimator.delta_kmeans;
    let mut labels = Vec::with_capacity(points.len());
    let mut clusters = vec![Vec::new(); cents.k()];
    for &i in points {
        let scores = score_example(i, ds, forest, cents, w, cc)?;
        let best = argbest_values(&scores, mode)?;
        let pick = if delta > 0.0 {
            let candidates: Vec<usize> = scores
                .iter()
                .enumerate()
                .filter(|(_, s)| (*s - scores[best]).abs() <= delta)
                .map(|(j, _)| j)
                .collect();
            candidates[rng.random_range(0..candidates.len())]
        } else {
            best
        };
        labels.push(pick);
        clusters[pick].push(i);
    }
    Ok(Assignment { labels, clusters })
}

/// Recompute centroids as cluster means. Simulated modes estimate each
/// coordinate from ⟨x⁽ˡ⁾|ξ_j⟩ scaled by ‖x⁽ˡ⁾‖/√|C_j| with per-coordinate
/// error at most ε₂, and charge the re-registration of the weighted
/// centroids as KP-tree writes. Empty clusters are repaired by reseeding at
/// the node point farthest from the cluster's current centroid (or removed,
/// under the drop policy); the returned flag reports whether that happened.
pub fn update_centroids(
    asg: &Assignment,
    points: &[usize],
    ds: &Dataset,
    forest: Option<&KpForest>,
    w: &FeatureWeights,
    cc: &ClusterConfig,
    prev: &Centroids,
) -> Result<(Centroids, bool)> {
    let d = ds.n_cols();
    let exact = cc.estimator.method == EstimationMethod::Exact;
    let mut repaired = false;
    let mut used_repair: Vec<usize> = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(asg.clusters.len());
    for (j, cluster) in asg.clusters.iter().enumerate() {
        if cluster.is_empty() {
            match cc.empty_policy {
                EmptyClusterPolicy::Drop => {
                    repaired = true;
                    continue;
                }
                EmptyClusterPolicy::Repair => {}
            }
            let mut far_point = None;
            let mut far_dist = f64::NEG_INFINITY;
            for &p in points {
                if used_repair.contains(&p) {
                    continue;
                }
                let dist = weighted_distance(ds.row(p), &prev.vectors[j], w)?;
                if dist > far_dist {
                    far_dist = dist;
                    far_point = Some(p);
                }
            }
            let p = far_point.ok_or(Error::EmptyNode)?;
            used_repair.push(p);
            vectors.push(ds.row(p).to_vec());
            repaired = true;
            continue;
        }
        if exact {
            let mut mean = vec![0.0; d];
            for &i in cluster {
                for (l, v) in ds.row(i).iter().enumerate() {
                    mean[l] += v;
                }
            }
            let m = cluster.len() as f64;
            for v in &mut mean {
                *v /= m;
            }
            vectors.push(mean);
        } else {
            let forest = forest.ok_or_else(|| {
                Error::Config("simulated centroid update needs a KP-tree forest".into())
            })?;
            let xi = AmplitudeVector::characteristic(cluster, forest.n_rows())?;
            let size_sqrt = (cluster.len() as f64).sqrt();
            let mut coords = Vec::with_capacity(d);
            for l in 0..d {
                let col_norm = forest.col_norm(l);
                if col_norm <= 0.0 {
                    coords.push(0.0);
                    continue;
                }
                let eps = eps_for_scaled_target(cc.estimator.eps2, col_norm, cluster.len());
                let col = forest.col_state(l)?;
                let est = inner_product(&col, &xi, eps, &cc.estimator, forest.ledger())?;
                coords.push(est.value / size_sqrt);
            }
            vectors.push(coords);
        }
    }
    let cents = Centroids::from_vectors(vectors, w);
    if !exact {
        if let Some(forest) = forest {
            let per_entry = (d.max(1).next_power_of_two().trailing_zeros()) as u64;
            forest
                .ledger()
                .add_node_writes(cents.k() as u64 * d as u64 * per_entry);
        }
    }
    Ok((cents, repaired))
}

/// Exact weighted within-cluster sum of squares for the current assignment.
pub fn weighted_objective(
    points: &[usize],
    labels: &[usize],
    ds: &Dataset,
    cents: &Centroids,
    w: &FeatureWeights,
) -> Result<f64> {
    let mut obj = 0.0;
    for (&i, &j) in points.iter().zip(labels) {
        let d = weighted_distance(ds.row(i), &cents.vectors[j], w)?;
        obj += d * d;
    }
    Ok(obj)
}

/// Alternate assignment and centroid updates until the maximum centroid
/// movement drops below `tol` or K iterations pass. Deterministic for a
/// fixed `node_seed`.
pub fn cluster_node(
    points: &[usize],
    ds: &Dataset,
    forest: Option<&KpForest>,
    w: &FeatureWeights,
    cc: &ClusterConfig,
    node_seed: u64,
) -> Result<ClusterOutcome> {
    if points.is_empty() {
        return Err(Error::EmptyNode);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
    let mut cents = init_centroids(points, ds, w, cc, &mut rng)?;
    if cc.estimator.method != EstimationMethod::Exact {
        if let Some(forest) = forest {
            let per_entry = (ds.n_cols().max(1).next_power_of_two().trailing_zeros()) as u64;
            forest
                .ledger()
                .add_node_writes(cents.k() as u64 * ds.n_cols() as u64 * per_entry);
        }
    }
    let mut trace = Vec::new();
    let mut assignment = None;
    for _ in 0..cc.max_iters {
        let asg = assign(points, ds, forest, &cents, w, cc, &mut rng)?;
        let (new_cents, repaired) = update_centroids(&asg, points, ds, forest, w, cc, &cents)?;
        // a dropped cluster changes the structure, so never treat that
        // iteration as converged
        let movement = if new_cents.k() != cents.k() {
            f64::INFINITY
        } else {
            cents
                .vectors
                .iter()
                .zip(&new_cents.vectors)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0f64, f64::max)
        };
        // keep assignment indices aligned with the surviving centroids
        let aligned = if new_cents.k() != cents.k() {
            let mut remap = vec![usize::MAX; asg.clusters.len()];
            let mut next = 0;
            for (j, cluster) in asg.clusters.iter().enumerate() {
                if !cluster.is_empty() {
                    remap[j] = next;
                    next += 1;
                }
            }
            Assignment {
                labels: asg.labels.iter().map(|&l| remap[l]).collect(),
                clusters: asg.clusters.into_iter().filter(|c| !c.is_empty()).collect(),
            }
        } else {
            asg
        };
        let objective = weighted_objective(points, &aligned.labels, ds, &new_cents, w)?;
        trace.push(IterationStats {
            objective,
            movement,
            repaired,
        });
        cents = new_cents;
        assignment = Some(aligned);
        if movement < cc.tol {
            break;
        }
    }
    Ok(ClusterOutcome {
        centroids: cents,
        assignment: assignment.expect("max_iters >= 1 guarantees one iteration"),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskKind;
    use crate::qestimate::QueryLedger;
    use crate::weights::no_weight;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn flat_ds(rows: &[&[f64]]) -> Dataset {
        let d = rows[0].len();
        Dataset::from_flat(
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            vec![0.0; rows.len()],
            TaskKind::Regression,
            (0..d).map(|j| format!("f{j}")).collect(),
        )
        .unwrap()
    }

    fn weights_from(normalized: Vec<f64>) -> FeatureWeights {
        let mut w = no_weight(normalized.len());
        w.normalized = normalized;
        w
    }

    #[test]
    fn weighted_distance_examples() {
        let w = no_weight(2);
        assert_eq!(
            weighted_distance(&[1.0, 2.0], &[1.0, 2.0], &w).unwrap(),
            0.0
        );
        let w10 = weights_from(vec![1.0, 0.0]);
        assert_eq!(
            weighted_distance(&[0.0, 9.0], &[0.0, 0.0], &w10).unwrap(),
            0.0
        );
        let w68 = weights_from(vec![0.6, 0.8]);
        assert_abs_diff_eq!(
            weighted_distance(&[1.0, 1.0], &[0.0, 0.0], &w68).unwrap(),
            1.4f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(matches!(
            weighted_distance(&[1.0], &[1.0, 2.0], &w68),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn weighted_inner_product_examples() {
        let w = no_weight(2);
        assert_eq!(
            weighted_inner_product(&[1.0, 0.0], &[0.0, 1.0], &w).unwrap(),
            0.0
        );
        let w10 = weights_from(vec![1.0, 0.0]);
        assert_eq!(
            weighted_inner_product(&[1.0, 0.0], &[1.0, 0.0], &w10).unwrap(),
            1.0
        );
    }

    #[test]
    fn noisy_inner_product_stays_within_envelope() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat_ds(&refs);
        let forest = KpForest::build(&ds, Arc::new(QueryLedger::new()));
        let w = no_weight(4);
        let eps = 0.01;
        let cfg = EstimatorConfig {
            method: EstimationMethod::AmplitudeEstimation,
            eps1: eps,
            seed: 1,
            ..EstimatorConfig::default()
        };
        for i in 0..100 {
            let c: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let cw: Vec<f64> = c.iter().zip(&w.normalized).map(|(v, wl)| v * wl).collect();
            let exact = weighted_inner_product(ds.row(i), &c, &w).unwrap();
            let est = weighted_inner_product_estimate(&forest, i, &cw, eps, &cfg).unwrap();
            let scale = forest.row_norm(i)
                * cw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = scale * (2.0 * std::f64::consts::PI * eps
                + (std::f64::consts::PI * eps).powi(2));
            assert!(
                (est.value - exact).abs() <= bound + 1e-12,
                "noise escaped envelope: |{} - {exact}| > {bound}",
                est.value
            );
        }
    }

    #[test]
    fn init_picks_both_points_when_k_equals_two() {
        let ds = flat_ds(&[&[0.0, 0.0], &[5.0, 5.0]]);
        let w = no_weight(2);
        let cc = ClusterConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cents = init_centroids(&[0, 1], &ds, &w, &cc, &mut rng).unwrap();
        assert_eq!(cents.k(), 2);
        let mut sorted: Vec<f64> = cents.vectors.iter().map(|c| c[0]).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, vec![0.0, 5.0]);
    }

    #[test]
    fn init_clamps_k_and_is_deterministic() {
        let ds = flat_ds(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let w = no_weight(2);
        let cc = ClusterConfig {
            k: 5,
            ..ClusterConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cents = init_centroids(&[0, 1], &ds, &w, &cc, &mut rng).unwrap();
        assert_eq!(cents.k(), 2);
        let mut rng_a = ChaCha8Rng::seed_from_u64(4);
        let mut rng_b = ChaCha8Rng::seed_from_u64(4);
        let a = init_centroids(&[0, 1], &ds, &w, &cc, &mut rng_a).unwrap();
        let b = init_centroids(&[0, 1], &ds, &w, &cc, &mut rng_b).unwrap();
        assert_eq!(a.vectors, b.vectors);
        assert!(matches!(
            init_centroids(&[], &ds, &w, &cc, &mut rng),
            Err(Error::EmptyNode)
        ));
    }

    #[test]
    fn exact_assignment_matches_direct_argmin() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat_ds(&refs);
        let w = weights_from(vec![0.8, 0.6, 0.0]);
        let cc = ClusterConfig {
            k: 3,
            ..ClusterConfig::default()
        };
        let cents = Centroids::from_vectors(
            vec![rows[0].clone(), rows[1].clone(), rows[2].clone()],
            &w,
        );
        let points: Vec<usize> = (0..40).collect();
        let mut arng = ChaCha8Rng::seed_from_u64(0);
        let asg = assign(&points, &ds, None, &cents, &w, &cc, &mut arng).unwrap();
        for (pos, &i) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in cents.vectors.iter().enumerate() {
                let d = weighted_distance(ds.row(i), c, &w).unwrap();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assert_eq!(asg.labels[pos], best);
        }
        // partition validity
        let mut seen: Vec<usize> = asg.clusters.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, points);
    }

    #[test]
    fn equidistant_point_goes_to_lowest_index() {
        let ds = flat_ds(&[&[0.0], &[2.0], &[1.0]]);
        let w = no_weight(1);
        let cc = ClusterConfig::default();
        let cents = Centroids::from_vectors(vec![vec![0.0], vec![2.0]], &w);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let asg = assign(&[2], &ds, None, &cents, &w, &cc, &mut rng).unwrap();
        assert_eq!(asg.labels, vec![0]);
    }

    #[test]
    fn large_delta_assignment_is_roughly_uniform() {
        let rows: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i % 10) as f64 * 0.01]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat_ds(&refs);
        let w = no_weight(1);
        let k = 3;
        let cc = ClusterConfig {
            k,
            estimator: EstimatorConfig {
                delta_kmeans: 100.0,
                ..EstimatorConfig::default()
            },
            ..ClusterConfig::default()
        };
        let cents =
            Centroids::from_vectors(vec![vec![0.0], vec![0.05], vec![0.09]], &w);
        let points: Vec<usize> = (0..1000).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let asg = assign(&points, &ds, None, &cents, &w, &cc, &mut rng).unwrap();
        let expected = 1000.0 / k as f64;
        let chi2: f64 = asg
            .clusters
            .iter()
            .map(|c| {
                let o = c.len() as f64;
                (o - expected) * (o - expected) / expected
            })
            .sum();
        // 99.9% quantile of chi-square with 2 dof is 13.8
        assert!(chi2 < 13.8, "chi2 = {chi2}, counts {:?}",
            asg.clusters.iter().map(|c| c.len()).collect::<Vec<_>>());
    }

    #[test]
    fn update_computes_means_and_repairs_empty_clusters() {
        let ds = flat_ds(&[&[0.0, 0.0], &[2.0, 2.0], &[9.0, 9.0]]);
        let w = no_weight(2);
        let cc = ClusterConfig::default();
        let prev = Centroids::from_vectors(vec![vec![0.0, 0.0], vec![1.0, 1.0]], &w);
        let asg = Assignment {
            labels: vec![0, 0, 0],
            clusters: vec![vec![0, 1, 2], vec![]],
        };
        let (cents, repaired) =
            update_centroids(&asg, &[0, 1, 2], &ds, None, &w, &cc, &prev).unwrap();
        assert!(repaired);
        // nonempty cluster becomes its mean
        assert_abs_diff_eq!(cents.vectors[0][0], 11.0 / 3.0, epsilon = 1e-12);
        // empty cluster reseeds at the farthest point from (1,1): row 2
        assert_eq!(cents.vectors[1], vec![9.0, 9.0]);

        let singleton = Assignment {
            labels: vec![0],
            clusters: vec![vec![2]],
        };
        let prev1 = Centroids::from_vectors(vec![vec![0.0, 0.0]], &w);
        let (c1, rep) = update_centroids(&singleton, &[2], &ds, None, &w, &cc, &prev1).unwrap();
        assert!(!rep);
        assert_eq!(c1.vectors[0], vec![9.0, 9.0]);
    }

    #[test]
    fn simulated_update_respects_eps2_bound() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat_ds(&refs);
        let forest = KpForest::build(&ds, Arc::new(QueryLedger::new()));
        let w = no_weight(3);
        let eps2 = 1e-3;
        let cc = ClusterConfig {
            k: 2,
            estimator: EstimatorConfig {
                method: EstimationMethod::AmplitudeEstimation,
                eps2,
                seed: 3,
                ..EstimatorConfig::default()
            },
            ..ClusterConfig::default()
        };
        let clusters = vec![(0..12).collect::<Vec<_>>(), (12..24).collect::<Vec<_>>()];
        let asg = Assignment {
            labels: (0..24).map(|i| i / 12).collect(),
            clusters,
        };
        let prev = Centroids::from_vectors(vec![vec![0.0; 3], vec![0.0; 3]], &w);
        let points: Vec<usize> = (0..24).collect();
        let (cents, _) =
            update_centroids(&asg, &points, &ds, Some(&forest), &w, &cc, &prev).unwrap();
        for (j, cluster) in asg.clusters.iter().enumerate() {
            for l in 0..3 {
                let exact: f64 =
                    cluster.iter().map(|&i| ds.row(i)[l]).sum::<f64>() / cluster.len() as f64;
                assert!(
                    (cents.vectors[j][l] - exact).abs() <= eps2 + 1e-15,
                    "coordinate error exceeded eps2"
                );
            }
        }
    }

    #[test]
    fn cluster_node_recovers_separated_blobs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for _ in 0..20 {
            rows.push(vec![rng.random::<f64>() * 0.2, rng.random::<f64>() * 0.2]);
        }
        for _ in 0..20 {
            rows.push(vec![5.0 + rng.random::<f64>() * 0.2, 5.0 + rng.random::<f64>() * 0.2]);
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat_ds(&refs);
        let w = no_weight(2);
        let cc = ClusterConfig {
            k: 2,
            ..ClusterConfig::default()
        };
        let points: Vec<usize> = (0..40).collect();
        let out = cluster_node(&points, &ds, None, &w, &cc, 7).unwrap();
        // each blob maps to exactly one cluster
        let first = out.assignment.labels[0];
        assert!(out.assignment.labels[..20].iter().all(|&l| l == first));
        assert!(out.assignment.labels[20..].iter().all(|&l| l != first));
        // objective must never increase
        for pair in out.trace.windows(2) {
            assert!(pair[1].objective <= pair[0].objective + 1e-9);
        }
    }

    #[test]
    fn k_equals_one_yields_node_mean() {
        let ds = flat_ds(&[&[1.0, 0.0], &[3.0, 0.0]]);
        let w = no_weight(2);
        let cc = ClusterConfig {
            k: 2,
            ..ClusterConfig::default()
        };
        // with a single point the effective k clamps to 1
        let out = cluster_node(&[0], &ds, None, &w, &cc, 1).unwrap();
        assert_eq!(out.centroids.k(), 1);
        assert_eq!(out.centroids.vectors[0], vec![1.0, 0.0]);
    }

    #[test]
    fn identical_seeds_reproduce_outcomes() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat_ds(&refs);
        let w = no_weight(2);
        let cc = ClusterConfig {
            k: 3,
            ..ClusterConfig::default()
        };
        let points: Vec<usize> = (0..30).collect();
        let a = cluster_node(&points, &ds, None, &w, &cc, 99).unwrap();
        let b = cluster_node(&points, &ds, None, &w, &cc, 99).unwrap();
        assert_eq!(a.assignment.labels, b.assignment.labels);
        assert_eq!(a.centroids.vectors, b.centroids.vectors);
    }
}
