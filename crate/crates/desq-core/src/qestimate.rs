//! Simulated quantum estimation primitives.
//!
//! Inner products between amplitude-encoded vectors can be evaluated exactly,
//! by Chernoff sampling of the interference probability p(1) = (1 − ⟨a,b⟩)/2
//! with ⌈1/ε²⌉ copies, or under an amplitude-estimation noise model whose
//! deviation always stays inside the envelope 2π√(p(1−p))ε + (πε)² at a cost
//! of ⌈1/ε⌉ iterations. A majority-vote booster lifts any constant-success
//! estimator to failure probability Δ. Every simulated operation is charged
//! to a [`QueryLedger`], the artifact's stand-in for runtime claims.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kptree::AmplitudeVector;

/// How inner products are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimationMethod {
    #[default]
    Exact,
    Chernoff,
    AmplitudeEstimation,
}

impl fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationMethod::Exact => write!(f, "exact"),
            EstimationMethod::Chernoff => write!(f, "chernoff"),
            EstimationMethod::AmplitudeEstimation => write!(f, "ae"),
        }
    }
}

/// Error budgets and seeding for the simulated estimators.
///
/// `eps1` drives inner-product/assignment estimates, `eps2` the per-coordinate
/// centroid updates, `eps3` the leaf-label means. `delta_cap` is the failure
/// probability target used by majority boosting and `delta_kmeans` the
/// assignment relaxation of δ-k-means. `Exact` mode ignores the tolerances.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub delta_cap: f64,
    pub delta_kmeans: f64,
    pub method: EstimationMethod,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            eps1: 0.01,
            eps2: 0.01,
            eps3: 0.01,
            delta_cap: 0.05,
            delta_kmeans: 0.0,
            method: EstimationMethod::Exact,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method != EstimationMethod::Exact {
            for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2), ("eps3", self.eps3)] {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("{name} must be > 0, got {v}")));
                }
            }
            if !(self.delta_cap > 0.0 && self.delta_cap < 0.5) {
                return Err(Error::Config(format!(
                    "delta must lie in (0, 0.5), got {}",
                    self.delta_cap
                )));
            }
        }
        if self.delta_kmeans < 0.0 {
            return Err(Error::Config(format!(
                "delta_kmeans must be >= 0, got {}",
                self.delta_kmeans
            )));
        }
        Ok(())
    }
}

/// Register width reported in the cost model; no numerical role.
pub const DISTANCE_REGISTER_QUBITS: u32 = 16;

/// Pipeline phases the ledger breaks costs down by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Load,
    Weights,
    Cluster,
    Leaf,
    Retrain,
}

pub const PHASES: [Phase; 5] = [
    Phase::Load,
    Phase::Weights,
    Phase::Cluster,
    Phase::Leaf,
    Phase::Retrain,
];

impl Phase {
    fn index(self) -> usize {
        match self {
            Phase::Load => 0,
            Phase::Weights => 1,
            Phase::Cluster => 2,
            Phase::Leaf => 3,
            Phase::Retrain => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Load => "load",
            Phase::Weights => "weights",
            Phase::Cluster => "cluster",
            Phase::Leaf => "leaf",
            Phase::Retrain => "retrain",
        }
    }
}

#[derive(Default)]
struct PhaseCounters {
    state_preps: AtomicU64,
    ae_iterations: AtomicU64,
    chernoff_samples: AtomicU64,
    majority_copies: AtomicU64,
    node_writes: AtomicU64,
}

/// Plain-value snapshot of one phase's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseSnapshot {
    pub state_preps: u64,
    pub ae_iterations: u64,
    pub chernoff_samples: u64,
    pub majority_copies: u64,
    pub node_writes: u64,
}

impl PhaseSnapshot {
    pub fn saturating_sub(self, earlier: PhaseSnapshot) -> PhaseSnapshot {
        PhaseSnapshot {
            state_preps: self.state_preps.saturating_sub(earlier.state_preps),
            ae_iterations: self.ae_iterations.saturating_sub(earlier.ae_iterations),
            chernoff_samples: self.chernoff_samples.saturating_sub(earlier.chernoff_samples),
            majority_copies: self.majority_copies.saturating_sub(earlier.majority_copies),
            node_writes: self.node_writes.saturating_sub(earlier.node_writes),
        }
    }

    fn add(&mut self, other: PhaseSnapshot) {
        self.state_preps += other.state_preps;
        self.ae_iterations += other.ae_iterations;
        self.chernoff_samples += other.chernoff_samples;
        self.majority_copies += other.majority_copies;
        self.node_writes += other.node_writes;
    }
}

/// Snapshot of all phases at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerSnapshot {
    pub phases: [PhaseSnapshot; 5],
}

impl LedgerSnapshot {
    pub fn phase(&self, p: Phase) -> PhaseSnapshot {
        self.phases[p.index()]
    }

    pub fn total(&self) -> PhaseSnapshot {
        let mut t = PhaseSnapshot::default();
        for p in &self.phases {
            t.add(*p);
        }
        t
    }

    /// Counters of the algorithmic phases (weights + cluster + leaf), i.e.
    /// everything except structure loading.
    pub fn algorithmic(&self) -> PhaseSnapshot {
        let mut t = PhaseSnapshot::default();
        t.add(self.phase(Phase::Weights));
        t.add(self.phase(Phase::Cluster));
        t.add(self.phase(Phase::Leaf));
        t
    }

    pub fn saturating_sub(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let mut out = LedgerSnapshot::default();
        for (i, p) in self.phases.iter().enumerate() {
            out.phases[i] = p.saturating_sub(earlier.phases[i]);
        }
        out
    }
}

/// Monotone counters of simulated work, split by pipeline phase.
///
/// Counters are atomics so concurrent estimation (parallel folds, parallel
/// sibling nodes) can share one ledger; the active phase is set by the
/// pipeline driver between stages.
#[derive(Default)]
pub struct QueryLedger {
    phases: [PhaseCounters; 5],
    current: AtomicUsize,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_phase(&self, phase: Phase) {
        self.current.store(phase.index(), Ordering::Relaxed);
    }

    pub fn current_phase(&self) -> Phase {
        PHASES[self.current.load(Ordering::Relaxed)]
    }

    fn at(&self) -> &PhaseCounters {
        &self.phases[self.current.load(Ordering::Relaxed)]
    }

    pub fn add_state_preps(&self, n: u64) {
        self.at().state_preps.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_ae_iterations(&self, n: u64) {
        self.at().ae_iterations.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_chernoff_samples(&self, n: u64) {
        self.at().chernoff_samples.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_majority_copies(&self, n: u64) {
        self.at().majority_copies.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_node_writes(&self, n: u64) {
        self.at().node_writes.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut out = LedgerSnapshot::default();
        for (i, c) in self.phases.iter().enumerate() {
            out.phases[i] = PhaseSnapshot {
                state_preps: c.state_preps.load(Ordering::Relaxed),
                ae_iterations: c.ae_iterations.load(Ordering::Relaxed),
                chernoff_samples: c.chernoff_samples.load(Ordering::Relaxed),
                majority_copies: c.majority_copies.load(Ordering::Relaxed),
                node_writes: c.node_writes.load(Ordering::Relaxed),
            };
        }
        out
    }

    /// Tabular dump: `phase<TAB>counter<TAB>value`, one row per counter.
    pub fn report(&self) -> String {
        snapshot_report(&self.snapshot())
    }
}

pub fn snapshot_report(snap: &LedgerSnapshot) -> String {
    let mut out = String::from("phase\tcounter\tvalue\n");
    for phase in PHASES {
        let p = snap.phase(phase);
        for (name, v) in [
            ("state_preps", p.state_preps),
            ("ae_iterations", p.ae_iterations),
            ("chernoff_samples", p.chernoff_samples),
            ("majority_copies", p.majority_copies),
            ("node_writes", p.node_writes),
        ] {
            out.push_str(&format!("{}\t{}\t{}\n", phase.name(), name, v));
        }
    }
    out.push_str(&format!("config\tp_register_qubits\t{DISTANCE_REGISTER_QUBITS}\n"));
    out
}

/// A value plus the noise envelope it was produced under.
#[derive(Debug, Clone, Copy)]
pub struct NoisyEstimate {
    pub value: f64,
    pub abs_error_bound: f64,
    pub success_prob: f64,
}

impl NoisyEstimate {
    pub fn exact(value: f64) -> Self {
        NoisyEstimate {
            value,
            abs_error_bound: 0.0,
            success_prob: 1.0,
        }
    }
}

/// Amplitude-estimation success constant 8/π².
pub const AE_SUCCESS_PROB: f64 = 8.0 / (PI * PI);

/// Additive error envelope of amplitude estimation at ⌈1/ε⌉ iterations:
/// |p̄ − p| ≤ 2π√(p(1−p))ε + (πε)².
pub fn ae_envelope(p: f64, eps: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    2.0 * PI * (p * (1.0 - p)).sqrt() * eps + (PI * eps) * (PI * eps)
}

/// Stable FNV-1a over little-endian bytes; keeps noise draws a pure function
/// of (seed, operands, eps) so estimates are order- and thread-independent.
fn fnv1a(seed: u64, parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut absorb = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    absorb(seed);
    for &p in parts {
        absorb(p);
    }
    h
}

fn estimate_rng(cfg: &EstimatorConfig, a: &AmplitudeVector, b: &AmplitudeVector, eps: f64) -> ChaCha8Rng {
    let mut parts = Vec::with_capacity(a.amplitudes.len() + b.amplitudes.len() + 4);
    parts.push(a.norm.to_bits());
    parts.push(b.norm.to_bits());
    parts.push(eps.to_bits());
    parts.push(a.amplitudes.len() as u64);
    parts.extend(a.amplitudes.iter().map(|v| v.to_bits()));
    parts.extend(b.amplitudes.iter().map(|v| v.to_bits()));
    ChaCha8Rng::seed_from_u64(fnv1a(cfg.seed, &parts))
}

/// Estimate the unnormalized inner product ‖a‖‖b‖⟨â,b̂⟩ of two encoded vectors.
///
/// Exact mode returns the true value with bound 0. AmplitudeEstimation adds
/// seeded uniform noise bounded by the `ae_envelope` at p(1) = (1 − ⟨â,b̂⟩)/2,
/// scaled by ‖a‖‖b‖, charging ⌈1/ε⌉ iterations. Chernoff averages ⌈1/ε²⌉
/// Bernoulli(p(1)) draws and maps back through I = 1 − 2p(1).
pub fn inner_product(
    a: &AmplitudeVector,
    b: &AmplitudeVector,
    eps: f64,
    cfg: &EstimatorConfig,
    ledger: &QueryLedger,
) -> Result<NoisyEstimate> {
    if a.amplitudes.len() != b.amplitudes.len() {
        return Err(Error::Dimension {
            expected: a.amplitudes.len(),
            got: b.amplitudes.len(),
        });
    }
    let dot: f64 = a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .clamp(-1.0, 1.0);
    let scale = a.norm * b.norm;
    match cfg.method {
        EstimationMethod::Exact => Ok(NoisyEstimate::exact(scale * dot)),
        EstimationMethod::AmplitudeEstimation => {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("eps must be > 0, got {eps}")));
            }
            let p1 = 0.5 * (1.0 - dot);
            let env = ae_envelope(p1, eps);
            let mut rng = estimate_rng(cfg, a, b, eps);
            let noisy = (dot + env * (2.0 * rng.random::<f64>() - 1.0)).clamp(-1.0, 1.0);
            ledger.add_state_preps(1);
            ledger.add_ae_iterations((1.0 / eps).ceil() as u64);
            Ok(NoisyEstimate {
                value: scale * noisy,
                abs_error_bound: scale * env,
                success_prob: AE_SUCCESS_PROB,
            })
        }
        EstimationMethod::Chernoff => {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("eps must be > 0, got {eps}")));
            }
            let p1 = 0.5 * (1.0 - dot);
            let samples = (1.0 / (eps * eps)).ceil() as u64;
            let mut rng = estimate_rng(cfg, a, b, eps);
            let mut ones = 0u64;
            for _ in 0..samples {
                if rng.random::<f64>() < p1 {
                    ones += 1;
                }
            }
            let p_hat = ones as f64 / samples as f64;
            let noisy = (1.0 - 2.0 * p_hat).clamp(-1.0, 1.0);
            ledger.add_state_preps(1);
            ledger.add_chernoff_samples(samples);
            Ok(NoisyEstimate {
                value: scale * noisy,
                // Hoeffding at t = ε on p̂ with ⌈1/ε²⌉ samples.
                abs_error_bound: scale * 2.0 * eps,
                success_prob: 1.0 - 2.0 * (-2.0f64).exp(),
            })
        }
    }
}

/// Copies needed for a majority vote to push an estimator of success
/// probability `a` > 1/2 down to failure probability `delta`:
/// ⌈ln(1/Δ) / (2(a − 1/2)²)⌉.
pub fn majority_copies(a: f64, delta: f64) -> Result<u64> {
    if !(a > 0.5 && a <= 1.0) {
        return Err(Error::Domain(format!(
            "majority vote needs success probability in (0.5, 1], got {a}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "failure target must lie in (0, 1), got {delta}"
        )));
    }
    let half_gap = a - 0.5;
    Ok(((1.0 / delta).ln() / (2.0 * half_gap * half_gap)).ceil() as u64)
}

/// Run `est` `majority_copies(a, delta)` times and return the median copy,
/// with success probability lifted to 1 − delta.
pub fn boosted<F>(mut est: F, a: f64, delta: f64, ledger: &QueryLedger) -> Result<NoisyEstimate>
where
    F: FnMut() -> Result<NoisyEstimate>,
{
    let copies = majority_copies(a, delta)?;
    let mut values = Vec::with_capacity(copies as usize);
    let mut bound: f64 = 0.0;
    for _ in 0..copies {
        let e = est()?;
        bound = bound.max(e.abs_error_bound);
        values.push(e.value);
    }
    ledger.add_majority_copies(copies);
    values.sort_by(|x, y| x.partial_cmp(y).expect("estimate values must be ordered"));
    let median = values[values.len() / 2];
    Ok(NoisyEstimate {
        value: median,
        abs_error_bound: bound,
        success_prob: 1.0 - delta,
    })
}

/// Extreme to search for in a list of estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgbestMode {
    Max,
    Min,
}

/// Index of the extreme estimate; ties go to the lowest index. Models the
/// comparator chain over estimate registers.
pub fn compare_and_argbest(estimates: &[NoisyEstimate], mode: ArgbestMode) -> Result<usize> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best = 0usize;
    for (i, e) in estimates.iter().enumerate().skip(1) {
        let better = match mode {
            ArgbestMode::Max => e.value > estimates[best].value,
            ArgbestMode::Min => e.value < estimates[best].value,
        };
        if better {
            best = i;
        }
    }
    Ok(best)
}

/// Same comparator over plain scores.
pub fn argbest_values(values: &[f64], mode: ArgbestMode) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        let better = match mode {
            ArgbestMode::Max => *v > values[best],
            ArgbestMode::Min => *v < values[best],
        };
        if better {
            best = i;
        }
    }
    Ok(best)
}

/// Derive a child RNG seed from a parent seed and a path of indices; used to
/// give folds and tree nodes independent deterministic streams.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    fnv1a(seed, path)
}

/// Estimator precision that keeps a scaled coordinate error under `target`:
/// the estimate is scaled by ‖v‖/√|C|, so with τ = target·√|C|/‖v‖ choosing
/// ε = τ/(π(1+τ)) bounds the envelope by πε(1+πε) ≤ τ.
pub fn eps_for_scaled_target(target: f64, norm: f64, count: usize) -> f64 {
    let tau = target * (count as f64).sqrt() / norm;
    tau / (PI * (1.0 + tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(v: &[f64]) -> AmplitudeVector {
        AmplitudeVector::encode(v).unwrap()
    }

    #[test]
    fn exact_self_inner_product_is_one() {
        let cfg = EstimatorConfig::default();
        let ledger = QueryLedger::new();
        let a = unit(&[0.6, 0.8]);
        let est = inner_product(&a, &a, 0.01, &cfg, &ledger).unwrap();
        assert_abs_diff_eq!(est.value, 1.0, epsilon = 1e-12);
        assert_eq!(est.abs_error_bound, 0.0);
    }

    #[test]
    fn exact_orthogonal_inner_product_is_zero() {
        let cfg = EstimatorConfig::default();
        let ledger = QueryLedger::new();
        let a = unit(&[1.0, 0.0]);
        let b = unit(&[0.0, 1.0]);
        let est = inner_product(&a, &b, 0.01, &cfg, &ledger).unwrap();
        assert_abs_diff_eq!(est.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn envelope_matches_hand_computed_value() {
        // p = 0.25, eps = 0.01: 2π√0.1875·0.01 + (0.01π)² ≈ 0.0282.
        let by_hand = 2.0 * PI * 0.1875f64.sqrt() * 0.01 + (PI * 0.01) * (PI * 0.01);
        let env = ae_envelope(0.25, 0.01);
        assert_abs_diff_eq!(env, by_hand, epsilon = 1e-15);
        assert_abs_diff_eq!(env, 0.0282, epsilon = 1e-4);
    }

    #[test]
    fn ae_noise_respects_envelope_and_charges_ledger() {
        let cfg = EstimatorConfig {
            method: EstimationMethod::AmplitudeEstimation,
            seed: 7,
            ..EstimatorConfig::default()
        };
        let ledger = QueryLedger::new();
        let a = unit(&[0.6, 0.8]);
        let b = unit(&[1.0, 0.0]);
        let exact = 0.6;
        let eps = 0.02;
        let est = inner_product(&a, &b, eps, &cfg, &ledger).unwrap();
        let p1 = 0.5 * (1.0 - exact);
        assert!((est.value - exact).abs() <= ae_envelope(p1, eps) + 1e-15);
        let snap = ledger.snapshot().total();
        assert_eq!(snap.state_preps, 1);
        assert_eq!(snap.ae_iterations, 50);
    }

    #[test]
    fn ae_noise_is_seed_deterministic() {
        let cfg = EstimatorConfig {
            method: EstimationMethod::AmplitudeEstimation,
            seed: 11,
            ..EstimatorConfig::default()
        };
        let ledger = QueryLedger::new();
        let a = unit(&[0.3, -0.4, 0.5]);
        let b = unit(&[0.5, 0.5, -0.1]);
        let e1 = inner_product(&a, &b, 0.01, &cfg, &ledger).unwrap();
        let e2 = inner_product(&a, &b, 0.01, &cfg, &ledger).unwrap();
        assert_eq!(e1.value, e2.value);
        let other = EstimatorConfig { seed: 12, ..cfg.clone() };
        let e3 = inner_product(&a, &b, 0.01, &other, &ledger).unwrap();
        assert_ne!(e1.value, e3.value);
    }

    #[test]
    fn chernoff_charges_inverse_eps_squared() {
        let cfg = EstimatorConfig {
            method: EstimationMethod::Chernoff,
            seed: 3,
            ..EstimatorConfig::default()
        };
        let ledger = QueryLedger::new();
        let a = unit(&[0.6, 0.8]);
        let b = unit(&[0.8, 0.6]);
        inner_product(&a, &b, 0.05, &cfg, &ledger).unwrap();
        assert_eq!(ledger.snapshot().total().chernoff_samples, 400);
    }

    #[test]
    fn inner_product_rejects_dimension_mismatch() {
        let cfg = EstimatorConfig::default();
        let ledger = QueryLedger::new();
        let a = unit(&[1.0, 0.0]);
        let b = unit(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            inner_product(&a, &b, 0.01, &cfg, &ledger),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn majority_copies_matches_formula() {
        assert_eq!(majority_copies(0.9, 0.01).unwrap(), 15);
        assert_eq!(majority_copies(0.81, 0.5).unwrap(), 4);
        assert_eq!(majority_copies(0.9, 0.5).unwrap(), 3);
        // a = 1 collapses the denominator to 1/2.
        for delta in [0.4, 0.1, 0.01] {
            let expect = ((1.0f64 / delta).ln() / 0.5).ceil() as u64;
            assert_eq!(majority_copies(1.0, delta).unwrap(), expect);
        }
        assert!(matches!(majority_copies(0.5, 0.1), Err(Error::Domain(_))));
        assert!(matches!(majority_copies(0.3, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn boosted_exact_estimator_returns_exact_median() {
        let ledger = QueryLedger::new();
        let est = || Ok(NoisyEstimate::exact(2.5));
        let out = boosted(est, 0.9, 0.05, &ledger).unwrap();
        assert_eq!(out.value, 2.5);
        assert_eq!(out.success_prob, 0.95);
        assert_eq!(
            ledger.snapshot().total().majority_copies,
            majority_copies(0.9, 0.05).unwrap()
        );
    }

    #[test]
    fn boosted_failure_rate_stays_under_delta() {
        // Estimator is right with probability a = 8/π² and otherwise far off;
        // over many boosted trials the median must miss at rate ≤ Δ.
        let delta = 0.05;
        let a = AE_SUCCESS_PROB;
        let ledger = QueryLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let trials = 10_000;
        let mut failures = 0;
        for _ in 0..trials {
            let est = || {
                let ok = rng.random::<f64>() < a;
                Ok(NoisyEstimate {
                    value: if ok { 1.0 } else { -1.0 },
                    abs_error_bound: 0.0,
                    success_prob: a,
                })
            };
            let out = boosted(est, a, delta, &ledger).unwrap();
            if out.value != 1.0 {
                failures += 1;
            }
        }
        assert!(
            (failures as f64) / (trials as f64) <= delta,
            "failure rate {} exceeded {delta}",
            failures as f64 / trials as f64
        );
    }

    #[test]
    fn argbest_breaks_ties_toward_lowest_index() {
        let ests: Vec<NoisyEstimate> = [0.1, 0.9, 0.9]
            .iter()
            .map(|&v| NoisyEstimate::exact(v))
            .collect();
        assert_eq!(compare_and_argbest(&ests, ArgbestMode::Max).unwrap(), 1);
        let single = [NoisyEstimate::exact(3.0)];
        assert_eq!(compare_and_argbest(&single, ArgbestMode::Max).unwrap(), 0);
        let vals: Vec<NoisyEstimate> = [3.0, -1.0, 2.0]
            .iter()
            .map(|&v| NoisyEstimate::exact(v))
            .collect();
        assert_eq!(compare_and_argbest(&vals, ArgbestMode::Min).unwrap(), 1);
        assert!(matches!(
            compare_and_argbest(&[], ArgbestMode::Max),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn ledger_phases_accumulate_independently() {
        let ledger = QueryLedger::new();
        ledger.set_phase(Phase::Load);
        ledger.add_node_writes(10);
        ledger.set_phase(Phase::Cluster);
        ledger.add_state_preps(3);
        let snap = ledger.snapshot();
        assert_eq!(snap.phase(Phase::Load).node_writes, 10);
        assert_eq!(snap.phase(Phase::Cluster).state_preps, 3);
        assert_eq!(snap.phase(Phase::Load).state_preps, 0);
        assert_eq!(snap.algorithmic().state_preps, 3);
    }
}
