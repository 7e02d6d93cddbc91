//! Closed-form minimisers of `φ(G) = γ·g(G) + (ρ/2)·‖G − V‖²_F`.
//!
//! Every supported penalty is separable over entries (or blocks), and on each
//! piece the minimiser is a nonnegative multiple `c·V_ij` (or `c·V_b`) of the
//! input. The operators below only compute that radial factor `c` from the
//! magnitude `t = |V_ij|` (or `‖V_b‖_F`).

use crate::linalg::Matrix;
use crate::model::{Granularity, ModelError, PenaltyKind, PenaltySpec};
use crate::par::{self, Parallelism};

/// One G-minimisation problem.
#[derive(Debug, Clone, Copy)]
pub struct ProxProblem<'a> {
    /// `V = Λ/ρ + F`
    pub v: &'a Matrix,
    pub gamma: f64,
    pub rho: f64,
    pub spec: &'a PenaltySpec,
}

impl ProxProblem<'_> {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.rho > 0.0) {
            return Err(ModelError::Invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.gamma >= 0.0) {
            return Err(ModelError::Invalid(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        self.spec.check(self.v.rows(), self.v.cols())
    }

    /// `φ(G)` for a candidate `G`.
    pub fn objective(&self, g: &Matrix) -> Result<f64, ModelError> {
        let pen = crate::model::penalty_value(g, self.spec)?;
        let dist = (g - self.v).frobenius_norm();
        Ok(self.gamma * pen + 0.5 * self.rho * dist * dist)
    }
}

/// Soft thresholding: `(1 − a/|v|)·v` if `|v| > a`, else 0.
pub fn soft_threshold(v: f64, a: f64) -> f64 {
    v * soft_factor(v.abs(), a)
}

/// Truncation: `v` if `|v| > b`, else 0.
pub fn truncate(v: f64, b: f64) -> f64 {
    v * truncation_factor(v.abs(), b)
}

fn soft_factor(t: f64, a: f64) -> f64 {
    if t > a {
        1.0 - a / t
    } else {
        0.0
    }
}

fn truncation_factor(t: f64, b: f64) -> f64 {
    if t > b {
        1.0
    } else {
        0.0
    }
}

/// Radial factor for `γ·log(1 + |g|/ε) + (ρ/2)(g − v)²` at `t = |v|`.
///
/// Stationary points of `r ↦ φ(r·v)` on `[0, 1]` are
/// `r± = (t − ε ± √Δ)/(2t)` with `Δ = (t + ε)² − 4γ/ρ`; `r⁻` is never a
/// minimiser, so the answer is whichever of `0` and `r⁺` has the smaller
/// objective, with ties going to 0.
pub fn log_factor(t: f64, gamma: f64, rho: f64, eps: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if gamma == 0.0 {
        return 1.0;
    }
    let ratio = gamma / rho;
    let delta = (t + eps) * (t + eps) - 4.0 * ratio;
    if delta <= 0.0 {
        return 0.0;
    }
    let r_plus = (t - eps + delta.sqrt()) / (2.0 * t);
    if r_plus <= 0.0 {
        return 0.0;
    }
    let r_plus = r_plus.min(1.0);
    // φ(r⁺v) − φ(0), scaled by 1/ρ
    let gain = ratio * (r_plus * t / eps).ln_1p() - 0.5 * t * t * r_plus * (2.0 - r_plus);
    if gain < 0.0 {
        r_plus
    } else {
        0.0
    }
}

/// Radial factor of the operator selected by `kind` for magnitude `t` and
/// weight `w` (the weight only enters the weighted ℓ1 threshold).
pub fn radial_factor(kind: PenaltyKind, t: f64, w: f64, gamma: f64, rho: f64, eps: f64) -> f64 {
    match kind {
        PenaltyKind::WeightedL1 => soft_factor(t, gamma * w / rho),
        PenaltyKind::Cardinality => truncation_factor(t, (2.0 * gamma / rho).sqrt()),
        PenaltyKind::SumOfLogs => log_factor(t, gamma, rho, eps),
    }
}

fn elementwise(p: &ProxProblem, kind: PenaltyKind, mode: Parallelism) -> Result<Matrix, ModelError> {
    p.validate()?;
    if !matches!(p.spec.granularity, Granularity::Elementwise) {
        return Err(ModelError::Invalid("elementwise operator needs an elementwise penalty".into()));
    }
    let mut out = p.v.clone();
    let (gamma, rho, eps) = (p.gamma, p.rho, p.spec.epsilon_log);
    let cols = out.cols();
    let weights = &p.spec.weights;
    par::for_each_row(mode, out.as_mut_slice(), cols, |i, row| {
        let w = weights.row(i);
        for (x, &wij) in row.iter_mut().zip(w) {
            *x *= radial_factor(kind, x.abs(), wij, gamma, rho, eps);
        }
    });
    Ok(out)
}

/// Weighted ℓ1: soft thresholding with `a = (γ/ρ)·W_ij`.
pub fn prox_weighted_l1(p: &ProxProblem) -> Result<Matrix, ModelError> {
    elementwise(p, PenaltyKind::WeightedL1, Parallelism::default())
}

/// Cardinality: truncation at `b = √(2γ/ρ)`.
pub fn prox_cardinality(p: &ProxProblem) -> Result<Matrix, ModelError> {
    elementwise(p, PenaltyKind::Cardinality, Parallelism::default())
}

/// Sum-of-logs shrinkage.
pub fn prox_sum_of_logs(p: &ProxProblem) -> Result<Matrix, ModelError> {
    elementwise(p, PenaltyKind::SumOfLogs, Parallelism::default())
}

/// Block operators: each block is scaled by the radial factor of its
/// Frobenius norm.
pub fn prox_blockwise(p: &ProxProblem) -> Result<Matrix, ModelError> {
    p.validate()?;
    let Granularity::Blockwise(part) = &p.spec.granularity else {
        return Err(ModelError::Invalid("blockwise operator needs a block partition".into()));
    };
    let mut out = p.v.clone();
    for b in part.blocks() {
        let t = part.block_norm(p.v, &b);
        let c = radial_factor(
            p.spec.kind,
            t,
            p.spec.weights[(b.bi, b.bj)],
            p.gamma,
            p.rho,
            p.spec.epsilon_log,
        );
        if c != 1.0 {
            for i in b.row0..b.row0 + b.rows {
                for x in &mut out.row_mut(i)[b.col0..b.col0 + b.cols] {
                    *x *= c;
                }
            }
        }
    }
    Ok(out)
}

/// Dispatches on the penalty kind and granularity.
pub fn prox(p: &ProxProblem) -> Result<Matrix, ModelError> {
    prox_with(p, Parallelism::default())
}

pub fn prox_with(p: &ProxProblem, mode: Parallelism) -> Result<Matrix, ModelError> {
    match p.spec.granularity {
        Granularity::Elementwise => elementwise(p, p.spec.kind, mode),
        Granularity::Blockwise(_) => prox_blockwise(p),
    }
}
