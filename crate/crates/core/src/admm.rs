//! ADMM for `minimize J(F) + γ·g(G)` subject to `F = G` at a fixed `γ`.
//!
//! Each outer iteration performs
//!
//! ```text
//! F ← argmin J(F) + (ρ/2)‖F − (G − Λ/ρ)‖²     (Anderson–Moore, inexact)
//! G ← prox(F + Λ/ρ)                            (closed form)
//! Λ ← Λ + ρ(F − G)
//! ```
//!
//! and stops once `‖F − G‖ ≤ ε` and `‖G⁺ − G‖ ≤ ε`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::h2::{ClosedLoop, H2Error};
use crate::linalg::{LinalgError, Matrix, SpdSylvester};
use crate::model::{Granularity, ModelError, PenaltyKind, PenaltySpec, Plant};
use crate::prox::{prox, ProxProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("initial gain is not stabilizing (spectral abscissa {0:e})")]
    NotStabilizing(f64),
    #[error("invalid options: {0}")]
    Options(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    H2(H2Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl From<H2Error> for AdmmError {
    fn from(e: H2Error) -> Self {
        match e {
            H2Error::NotStabilizing(a) => AdmmError::NotStabilizing(a),
            other => AdmmError::H2(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmOptions {
    pub rho: f64,
    pub eps_stop: f64,
    pub max_iter: usize,
    pub am_max_iter: usize,
    /// Relative to `max(1, ‖F‖)`.
    pub am_grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 100.0,
            eps_stop: 1e-4,
            max_iter: 1000,
            am_max_iter: 50,
            am_grad_tol: 1e-3,
            armijo_c: 1e-4,
            backtrack: 0.5,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<(), AdmmError> {
        let bad = |what: &str| Err(AdmmError::Options(what.to_string()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive and finite");
        }
        if !(self.eps_stop > 0.0) {
            return bad("eps_stop must be positive");
        }
        if !(self.am_grad_tol > 0.0) {
            return bad("am_grad_tol must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub f: Matrix,
    pub g: Matrix,
    pub lambda: Matrix,
    pub iter: usize,
    pub primal_residual: f64,
    pub g_change: f64,
}

impl AdmmState {
    /// `F = G = F0`, `Λ = 0`.
    pub fn new(f0: &Matrix) -> Self {
        AdmmState {
            f: f0.clone(),
            g: f0.clone(),
            lambda: Matrix::zeros(f0.rows(), f0.cols()),
            iter: 0,
            primal_residual: 0.0,
            g_change: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmmStatus {
    Converged,
    NotConverged,
    /// The last F-step line search could not make progress.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct FStep {
    pub gain: Matrix,
    pub iterations: usize,
    /// `‖∇φ(F)‖_F` at the returned gain.
    pub grad_norm: f64,
    pub stalled: bool,
}

/// Minimises `φ(F) = J(F) + (ρ/2)‖F − U‖²_F` from a stabilizing `F0`.
///
/// Every iteration solves `2·R·F̄·L + ρ·F̄ = 2·B2ᵀ·P·L + ρ·U` for the Gramians at
/// the current gain and backtracks along `F̄ − F`. Unstable candidates count
/// as `φ = +∞`, so every returned gain is stabilizing.
pub fn f_min_anderson_moore(
    plant: &Plant,
    u: &Matrix,
    rho: f64,
    f0: &Matrix,
    opts: &AdmmOptions,
) -> Result<FStep, AdmmError> {
    let sylvester = SpdSylvester::new(&plant.r)?;
    let tol = opts.am_grad_tol * f0.frobenius_norm().max(1.0);
    let inner = f_step(plant, &sylvester, u, rho, ClosedLoop::new(plant, f0)?, tol, opts)?;
    Ok(FStep {
        gain: inner.cl.into_gain(),
        iterations: inner.iterations,
        grad_norm: inner.grad_norm,
        stalled: inner.stalled,
    })
}

struct Inner<'a> {
    cl: ClosedLoop<'a>,
    iterations: usize,
    grad_norm: f64,
    stalled: bool,
}

/// Multiple of machine epsilon treated as rounding noise in `φ`.
const ROUNDING_SLACK: f64 = 64.0;

fn phi(cl: &ClosedLoop, u: &Matrix, rho: f64) -> f64 {
    let d = (cl.gain() - u).frobenius_norm();
    cl.objective() + 0.5 * rho * d * d
}

fn f_step<'a>(
    plant: &'a Plant,
    sylvester: &SpdSylvester,
    u: &Matrix,
    rho: f64,
    mut cl: ClosedLoop<'a>,
    tol: f64,
    opts: &AdmmOptions,
) -> Result<Inner<'a>, AdmmError> {
    let mut value = phi(&cl, u, rho);
    for it in 0..opts.am_max_iter {
        let f = cl.gain();
        let mut grad = cl.gradient();
        grad.axpy(rho, &(f - u));
        let grad_norm = grad.frobenius_norm();
        if grad_norm <= tol {
            return Ok(Inner { cl, iterations: it, grad_norm, stalled: false });
        }

        let mut rhs = plant.b2.tr_matmul(cl.p()).matmul(cl.l()).scale(2.0);
        rhs.axpy(rho, u);
        let target = sylvester.solve(cl.l(), rho, &rhs)?;
        let mut dir = &target - f;
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = grad.scale(-1.0);
            slope = -grad_norm * grad_norm;
        }

        // Below this the Armijo decrease is lost in the rounding of φ.
        let noise = ROUNDING_SLACK * f64::EPSILON * value.abs().max(1.0);
        let mut s = 1.0;
        let accepted = loop {
            let mut cand = f.clone();
            cand.axpy(s, &dir);
            if let Ok(next) = ClosedLoop::new(plant, &cand) {
                let v = phi(&next, u, rho);
                let decrease = opts.armijo_c * s * slope;
                if v <= value + decrease || (-decrease <= noise && v <= value + noise) {
                    value = v;
                    break Some(next);
                }
            }
            s *= opts.backtrack;
            if s < 1e-12 {
                break None;
            }
        };
        match accepted {
            Some(next) => cl = next,
            None => {
                return Ok(Inner { cl, iterations: it + 1, grad_norm, stalled: true });
            }
        }
    }
    let mut grad = cl.gradient();
    grad.axpy(rho, &(cl.gain() - u));
    let grad_norm = grad.frobenius_norm();
    Ok(Inner { cl, iterations: opts.am_max_iter, grad_norm, stalled: false })
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub state: AdmmState,
    pub status: AdmmStatus,
    /// Anderson–Moore iterations summed over all F-steps.
    pub am_iterations: usize,
    pub stalls: usize,
}

/// Runs ADMM from `F = G = F_init`, `Λ = 0`.
pub fn admm_solve(
    plant: &Plant,
    gamma: f64,
    spec: &PenaltySpec,
    f_init: &Matrix,
    opts: &AdmmOptions,
) -> Result<AdmmOutcome, AdmmError> {
    admm_solve_from(plant, gamma, spec, AdmmState::new(f_init), opts)
}

/// Runs ADMM from an existing `(F, G, Λ)`; the iteration counter restarts.
pub fn admm_solve_from(
    plant: &Plant,
    gamma: f64,
    spec: &PenaltySpec,
    state: AdmmState,
    opts: &AdmmOptions,
) -> Result<AdmmOutcome, AdmmError> {
    opts.validate()?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(AdmmError::Options(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    plant.check_gain(&state.f)?;
    spec.check(plant.m(), plant.n())?;
    let sylvester = SpdSylvester::new(&plant.r)?;
    let rho = opts.rho;

    let AdmmState { f, mut g, mut lambda, .. } = state;
    let mut cl = ClosedLoop::new(plant, &f)?;
    let mut am_iterations = 0;
    let mut stalls = 0;
    let mut last_stalled = false;
    let mut primal_residual = f64::INFINITY;
    let mut g_change = f64::INFINITY;

    for k in 1..=opts.max_iter {
        let u = &g - &lambda.scale(1.0 / rho);
        // Inner accuracy only needs to match what ρ·‖G⁺ − G‖ allows at the stop.
        let tol = (opts.am_grad_tol * cl.gain().frobenius_norm().max(1.0)).min(rho * opts.eps_stop);
        let step = f_step(plant, &sylvester, &u, rho, cl, tol, opts)?;
        am_iterations += step.iterations;
        last_stalled = step.stalled;
        if step.stalled {
            stalls += 1;
        }
        cl = step.cl;
        let f = cl.gain().clone();

        let v = &f + &lambda.scale(1.0 / rho);
        let g_next = prox(&ProxProblem { v: &v, gamma, rho, spec })?;
        let diff = &f - &g_next;
        lambda.axpy(rho, &diff);
        primal_residual = diff.frobenius_norm();
        g_change = (&g_next - &g).frobenius_norm();
        g = g_next;

        if primal_residual <= opts.eps_stop && g_change <= opts.eps_stop {
            return Ok(AdmmOutcome {
                state: AdmmState { f, g, lambda, iter: k, primal_residual, g_change },
                status: AdmmStatus::Converged,
                am_iterations,
                stalls,
            });
        }
    }
    let status = if last_stalled { AdmmStatus::Stalled } else { AdmmStatus::NotConverged };
    Ok(AdmmOutcome {
        state: AdmmState {
            f: cl.into_gain(),
            g,
            lambda,
            iter: opts.max_iter,
            primal_residual,
            g_change,
        },
        status,
        am_iterations,
        stalls,
    })
}

/// Residuals of the first-order conditions `F = G`, `∇J(F) + Λ = 0` and
/// `Λ ∈ γ·∂g(G)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub primal: f64,
    pub dual: f64,
    /// Only defined for weighted ℓ1 penalties.
    pub subgradient: Option<f64>,
    /// `max(1, ‖F‖_F, ‖Λ‖_F)`
    pub scale: f64,
}

impl Certificate {
    pub fn max_residual(&self) -> f64 {
        self.primal.max(self.dual).max(self.subgradient.unwrap_or(0.0))
    }
}

pub fn critical_point_certificate(
    plant: &Plant,
    state: &AdmmState,
    gamma: f64,
    spec: &PenaltySpec,
) -> Result<Certificate, AdmmError> {
    spec.check(plant.m(), plant.n())?;
    let primal = (&state.f - &state.g).frobenius_norm();
    let dual = match ClosedLoop::new(plant, &state.f) {
        Ok(cl) => (&cl.gradient() + &state.lambda).frobenius_norm(),
        Err(H2Error::NotStabilizing(_)) => f64::INFINITY,
        Err(e) => return Err(e.into()),
    };
    let subgradient = match spec.kind {
        PenaltyKind::WeightedL1 => Some(subgradient_violation(state, gamma, spec)),
        _ => None,
    };
    let scale = 1f64
        .max(state.f.frobenius_norm())
        .max(state.lambda.frobenius_norm());
    Ok(Certificate { primal, dual, subgradient, scale })
}

fn subgradient_violation(state: &AdmmState, gamma: f64, spec: &PenaltySpec) -> f64 {
    let (g, lambda, w) = (&state.g, &state.lambda, &spec.weights);
    let mut worst = 0f64;
    match &spec.granularity {
        Granularity::Elementwise => {
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    let bound = gamma * w[(i, j)];
                    let (gij, lij) = (g[(i, j)], lambda[(i, j)]);
                    let v = if gij == 0.0 {
                        (lij.abs() - bound).max(0.0)
                    } else {
                        (lij - bound * gij.signum()).abs()
                    };
                    worst = worst.max(v);
                }
            }
        }
        Granularity::Blockwise(part) => {
            for b in part.blocks() {
                let bound = gamma * w[(b.bi, b.bj)];
                let gn = part.block_norm(g, &b);
                let v = if gn == 0.0 {
                    (part.block_norm(lambda, &b) - bound).max(0.0)
                } else {
                    let mut acc = 0.0;
                    for i in b.row0..b.row0 + b.rows {
                        for j in b.col0..b.col0 + b.cols {
                            let d = lambda[(i, j)] - bound * g[(i, j)] / gn;
                            acc += d * d;
                        }
                    }
                    acc.sqrt()
                };
                worst = worst.max(v);
            }
        }
    }
    worst
}
