//! Minimisation of `J(F)` over gains with a fixed sparsity pattern.
//!
//! Newton's method on the free entries: the direction approximately solves
//! `H(F, D)∘S = −∇J(F)∘S` by conjugate gradients, truncated on nonpositive
//! curvature, followed by an Armijo backtracking search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::h2::{ClosedLoop, H2Error};
use crate::linalg::Matrix;
use crate::model::{Plant, StructureMask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolishError {
    #[error("initial gain has nonzero entries outside the structure")]
    Unstructured,
    #[error("initial gain is not stabilizing (spectral abscissa {0:e})")]
    NotStabilizing(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    H2(H2Error),
}

impl From<H2Error> for PolishError {
    fn from(e: H2Error) -> Self {
        match e {
            H2Error::NotStabilizing(a) => PolishError::NotStabilizing(a),
            H2Error::Dimension(s) => PolishError::Dimension(s),
            other => PolishError::H2(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolishOptions {
    /// Relative to `max(1, ‖F‖_F)`.
    pub grad_tol: f64,
    /// Once the gradient test passes, the Newton step must also be below
    /// this, relative to `max(1, ‖F‖_F)`.
    pub step_tol: f64,
    pub max_newton: usize,
    pub cg_rel_tol: f64,
    /// CG iterations allowed per free entry.
    pub cg_iter_factor: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
}

impl Default for PolishOptions {
    fn default() -> Self {
        PolishOptions {
            grad_tol: 1e-6,
            step_tol: 1e-7,
            max_newton: 100,
            cg_rel_tol: 1e-6,
            cg_iter_factor: 2,
            armijo_c: 1e-4,
            backtrack: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolishStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolishOutcome {
    pub gain: Matrix,
    pub objective: f64,
    pub status: PolishStatus,
    pub iterations: usize,
    pub cg_iterations: usize,
    /// `‖∇J(F)∘S‖_F` at the returned gain.
    pub grad_norm: f64,
    /// `J` at the start and after every accepted step.
    pub history: Vec<f64>,
}

/// `F∘S`.
pub fn project_structure(f: &Matrix, mask: &StructureMask) -> Matrix {
    mask.apply(f)
}

pub fn polish_gain(
    plant: &Plant,
    mask: &StructureMask,
    f0: &Matrix,
    opts: &PolishOptions,
) -> Result<PolishOutcome, PolishError> {
    if mask.shape() != f0.shape() {
        return Err(PolishError::Dimension(format!(
            "mask is {:?}, gain is {:?}",
            mask.shape(),
            f0.shape()
        )));
    }
    if !mask.contains(f0) {
        return Err(PolishError::Unstructured);
    }
    let mut cl = ClosedLoop::new(plant, f0)?;
    let mut history = vec![cl.objective()];
    let mut cg_total = 0;
    let max_cg = opts.cg_iter_factor * mask.count().max(1);

    for it in 0..opts.max_newton {
        let grad = mask.apply(&cl.gradient());
        let grad_norm = grad.frobenius_norm();
        let scale = cl.gain().frobenius_norm().max(1.0);
        let small_grad = grad_norm <= opts.grad_tol * scale;
        if small_grad && grad_norm == 0.0 {
            return Ok(finish(cl, PolishStatus::Converged, it, cg_total, grad_norm, history));
        }

        let (mut dir, cg_iters) = newton_direction(&cl, mask, &grad, opts.cg_rel_tol, max_cg)?;
        cg_total += cg_iters;
        if small_grad && dir.frobenius_norm() <= opts.step_tol * scale {
            return Ok(finish(cl, PolishStatus::Converged, it, cg_total, grad_norm, history));
        }
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = grad.scale(-1.0);
            slope = -grad_norm * grad_norm;
        }

        let j = cl.objective();
        let mut s = 1.0;
        let next = loop {
            let mut cand = cl.gain().clone();
            cand.axpy(s, &dir);
            if let Ok(next) = ClosedLoop::new(plant, &cand) {
                if next.objective() <= j + opts.armijo_c * s * slope && next.objective() < j {
                    break Some(next);
                }
            }
            s *= opts.backtrack;
            if s < 1e-12 {
                break None;
            }
        };
        match next {
            Some(next) => {
                cl = next;
                history.push(cl.objective());
            }
            None => {
                let status = if small_grad { PolishStatus::Converged } else { PolishStatus::LineSearchFailed };
                return Ok(finish(cl, status, it, cg_total, grad_norm, history));
            }
        }
    }
    let grad_norm = mask.apply(&cl.gradient()).frobenius_norm();
    Ok(finish(cl, PolishStatus::MaxIterations, opts.max_newton, cg_total, grad_norm, history))
}

fn finish(
    cl: ClosedLoop,
    status: PolishStatus,
    iterations: usize,
    cg_iterations: usize,
    grad_norm: f64,
    history: Vec<f64>,
) -> PolishOutcome {
    let objective = cl.objective();
    PolishOutcome {
        gain: cl.into_gain(),
        objective,
        status,
        iterations,
        cg_iterations,
        grad_norm,
        history,
    }
}

/// Truncated CG on `D ↦ H(F, D)∘S` with right-hand side `−grad`.
fn newton_direction(
    cl: &ClosedLoop,
    mask: &StructureMask,
    grad: &Matrix,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Matrix, usize), PolishError> {
    let mut d = Matrix::zeros(grad.rows(), grad.cols());
    let mut r = grad.scale(-1.0);
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let stop = rel_tol * rr.sqrt();
    for it in 0..max_iter {
        let hp = mask.apply(&cl.hessian_apply(&p)?);
        let curv = p.dot(&hp);
        if !(curv > 0.0) {
            if it == 0 {
                return Ok((r, 1));
            }
            return Ok((d, it + 1));
        }
        let alpha = rr / curv;
        d.axpy(alpha, &p);
        r.axpy(-alpha, &hp);
        let rr_next = r.dot(&r);
        if rr_next.sqrt() <= stop {
            return Ok((d, it + 1));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        p = &r + &p.scale(beta);
    }
    Ok((d, max_iter))
}
