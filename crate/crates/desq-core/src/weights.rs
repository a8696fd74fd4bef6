//! Feature-weight estimation via Pearson correlation.
//!
//! Binary {0,1} labels flow through the same formula (point-biserial
//! correlation is Pearson on a binary variable). The quantum-path estimator
//! reconstructs w_j from three estimable quantities — s_j = Σᵢ x_ij·yᵢ,
//! a_j = √N·μ_j and b = √N·μ_y — as (s_j − a_j·b) / (√(‖x⁽ʲ⁾‖² − a_j²)·
//! √(‖Y‖² − b²)). Weights are reported signed in [−1,1] and normalized as a
//! unit-norm vector of absolute values.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kptree::{AmplitudeVector, KpForest};
use crate::qestimate::{inner_product, EstimationMethod, EstimatorConfig, Phase};

/// Denominator factors at or below this relative level count as degenerate
/// (zero variance within noise).
const DEGENERATE_RTOL: f64 = 1e-12;

/// Exact Pearson correlation; zero variance on either side yields 0.
pub fn pearson_exact(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as f64;
    if x.is_empty() {
        return Ok(0.0);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-feature statistics as estimated on the quantum path.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureStat {
    /// μ_j, reconstructed from a_j/√N.
    pub mean: f64,
    /// Population standard deviation √((‖x⁽ʲ⁾‖² − a_j²)/N).
    pub std: f64,
    /// ‖x⁽ʲ⁾‖.
    pub norm: f64,
    /// s_j = Σᵢ x_ij·yᵢ.
    pub s: f64,
    /// a_j = √N·μ_j.
    pub a: f64,
    /// Propagated error bound η_j·ε (0 in exact mode).
    pub error_bound: f64,
    /// Set when a denominator factor vanished within noise; weight forced 0.
    pub degenerate: bool,
}

/// Label-side statistics shared by all features.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelStat {
    pub mean: f64,
    pub std: f64,
    pub norm: f64,
    /// b = √N·μ_y.
    pub b: f64,
}

/// Signed raw weights plus their unit-norm absolute-value normalization.
#[derive(Debug, Clone)]
pub struct FeatureWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub per_feature: Vec<FeatureStat>,
    pub label: LabelStat,
}

impl FeatureWeights {
    pub fn dim(&self) -> usize {
        self.raw.len()
    }

    /// Tabular report: feature, raw_w, normalized_w, error_bound.
    pub fn report(&self, names: &[String]) -> String {
        let mut out = String::from("feature\traw_w\tnormalized_w\terror_bound\n");
        for (j, ((raw, norm), stat)) in self
            .raw
            .iter()
            .zip(&self.normalized)
            .zip(&self.per_feature)
            .enumerate()
        {
            let name = names.get(j).map(|s| s.as_str()).unwrap_or("?");
            out.push_str(&format!(
                "{name}\t{raw:.6}\t{norm:.6}\t{:.6}\n",
                stat.error_bound
            ));
        }
        out
    }
}

/// Normalize |w| to unit ℓ2 norm; an all-zero vector falls back to uniform
/// 1/√d so downstream clustering stays well defined.
pub fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    let norm_sq: f64 = raw.iter().map(|w| w * w).sum();
    if norm_sq <= 0.0 {
        let u = 1.0 / (raw.len() as f64).sqrt();
        return vec![u; raw.len()];
    }
    let norm = norm_sq.sqrt();
    raw.iter().map(|w| w.abs() / norm).collect()
}

/// The theorem constant η = 7·max(‖x‖‖Y‖, ‖x‖², ‖Y‖²) / (N·min(σxσY, σx², σY²)).
pub fn eta_constant(col_norm: f64, label_norm: f64, sigma_x: f64, sigma_y: f64, n: usize) -> f64 {
    let num = (col_norm * label_norm)
        .max(col_norm * col_norm)
        .max(label_norm * label_norm);
    let den = (sigma_x * sigma_y).min(sigma_x * sigma_x).min(sigma_y * sigma_y);
    if den <= 0.0 {
        f64::INFINITY
    } else {
        7.0 * num / ((n as f64) * den)
    }
}

/// One reconstructed feature weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub stat: FeatureStat,
    pub label: LabelStat,
}

/// Estimate w_j through forest state queries: s_j from ⟨x⁽ʲ⁾|Y⟩, a_j and b
/// from inner products with the uniform state, then the reconstruction
/// formula. `literal_numerator` switches to the diagnostic numerator
/// s_j − a_j·b·(2 − 1/N).
pub fn pearson_quantum(
    forest: &KpForest,
    j: usize,
    cfg: &EstimatorConfig,
    literal_numerator: bool,
) -> Result<WeightEstimate> {
    let n = forest.n_rows();
    let col_norm = forest.col_norm(j);
    let label_norm = forest.label_norm();
    let degenerate = |stat: FeatureStat, label: LabelStat| WeightEstimate {
        value: 0.0,
        error_bound: 0.0,
        stat: FeatureStat {
            degenerate: true,
            ..stat
        },
        label,
    };
    if col_norm <= 0.0 || label_norm <= 0.0 {
        return Ok(degenerate(
            FeatureStat {
                norm: col_norm,
                ..FeatureStat::default()
            },
            LabelStat {
                norm: label_norm,
                ..LabelStat::default()
            },
        ));
    }
    let ledger = forest.ledger();
    let col = forest.col_state(j)?;
    let label = forest.label_state()?;
    let uniform = AmplitudeVector::uniform(n);
    let eps = cfg.eps1;
    let s = inner_product(&col, &label, eps, cfg, ledger)?;
    let a = inner_product(&col, &uniform, eps, cfg, ledger)?;
    let b = inner_product(&label, &uniform, eps, cfg, ledger)?;

    let sqrt_n = (n as f64).sqrt();
    let den_x = col_norm * col_norm - a.value * a.value;
    let den_y = label_norm * label_norm - b.value * b.value;
    let sigma_x = (den_x.max(0.0) / n as f64).sqrt();
    let sigma_y = (den_y.max(0.0) / n as f64).sqrt();
    let stat = FeatureStat {
        mean: a.value / sqrt_n,
        std: sigma_x,
        norm: col_norm,
        s: s.value,
        a: a.value,
        error_bound: 0.0,
        degenerate: false,
    };
    let label_stat = LabelStat {
        mean: b.value / sqrt_n,
        std: sigma_y,
        norm: label_norm,
        b: b.value,
    };
    if den_x <= DEGENERATE_RTOL * col_norm * col_norm
        || den_y <= DEGENERATE_RTOL * label_norm * label_norm
    {
        return Ok(degenerate(stat, label_stat));
    }
    let factor = if literal_numerator {
        2.0 - 1.0 / n as f64
    } else {
        1.0
    };
    let numerator = s.value - a.value * b.value * factor;
    let value = (numerator / (den_x.sqrt() * den_y.sqrt())).clamp(-1.0, 1.0);
    let error_bound = if cfg.method == EstimationMethod::Exact {
        0.0
    } else {
        eta_constant(col_norm, label_norm, sigma_x, sigma_y, n) * eps
    };
    Ok(WeightEstimate {
        value,
        error_bound,
        stat: FeatureStat {
            error_bound,
            ..stat
        },
        label: label_stat,
    })
}

/// Estimate all feature weights once per (re)train; charged to the ledger's
/// weights phase.
pub fn compute_weights(
    forest: &KpForest,
    ds: &Dataset,
    cfg: &EstimatorConfig,
) -> Result<FeatureWeights> {
    if ds.n_rows() != forest.n_rows() || ds.n_cols() != forest.n_cols() {
        return Err(Error::Dimension {
            expected: forest.n_rows() * forest.n_cols(),
            got: ds.n_rows() * ds.n_cols(),
        });
    }
    forest.ledger().set_phase(Phase::Weights);
    let d = forest.n_cols();
    let mut raw = Vec::with_capacity(d);
    let mut per_feature = Vec::with_capacity(d);
    let mut label = LabelStat::default();
    for j in 0..d {
        let est = pearson_quantum(forest, j, cfg, false)?;
        raw.push(est.value);
        per_feature.push(est.stat);
        if est.label.norm > 0.0 {
            label = est.label;
        }
    }
    let normalized = normalize_weights(&raw);
    Ok(FeatureWeights {
        raw,
        normalized,
        per_feature,
        label,
    })
}

/// The no-weight ablation: raw weights all one, i.e. plain k-means geometry.
pub fn no_weight(d: usize) -> FeatureWeights {
    let raw = vec![1.0; d];
    let normalized = normalize_weights(&raw);
    FeatureWeights {
        raw,
        normalized,
        per_feature: vec![FeatureStat::default(); d],
        label: LabelStat::default(),
    }
}
