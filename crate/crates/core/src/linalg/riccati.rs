//! Continuous-time algebraic Riccati equation
//! `AᵀP + PA + Q − P·B·R⁻¹·Bᵀ·P = 0` via the stable invariant subspace of the
//! Hamiltonian matrix, followed by Newton–Kleinman refinement.

use super::lu::{inverse, Lu};
use super::lyapunov::LyapunovSolver;
use super::schur::SchurForm;
use super::{LinalgError, Matrix};

/// Relative residual the refined solution must reach.
pub const ARE_RESIDUAL_TOL: f64 = 1e-8;
const MAX_REFINEMENTS: usize = 4;

#[derive(Debug, Clone)]
pub struct CareSolution {
    /// Stabilising solution `P`.
    pub p: Matrix,
    /// Optimal gain `R⁻¹·Bᵀ·P`.
    pub gain: Matrix,
    /// Relative residual after refinement.
    pub residual: f64,
}

/// Residual of the Riccati equation at `p`, relative to the size of its terms.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r_inv: &Matrix, p: &Matrix) -> f64 {
    let pa = p.matmul(a);
    let pb = p.matmul(b);
    let quad = pb.matmul(r_inv).matmul(&pb.transpose());
    let res = &(&(&pa.transpose() + &pa) + q) - &quad;
    let scale = 2.0 * pa.frobenius_norm() + q.frobenius_norm() + quad.frobenius_norm();
    res.frobenius_norm() / scale.max(f64::MIN_POSITIVE)
}

/// One Newton–Kleinman step from `gain`: the cost-to-go of that gain and the
/// gain it induces.
pub fn newton_kleinman_step(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    r_inv: &Matrix,
    gain: &Matrix,
) -> Result<(Matrix, Matrix), LinalgError> {
    let acl = a - &b.matmul(gain);
    let rhs = q + &gain.tr_matmul(&r.matmul(gain));
    let p = LyapunovSolver::new(&acl)?.solve_observability(&rhs)?;
    let next = r_inv.matmul(&b.tr_matmul(&p));
    Ok((p, next))
}

pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<CareSolution, LinalgError> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LinalgError::Dimension(
            "Riccati data must be A n×n, B n×m, Q n×n, R m×m".into(),
        ));
    }
    let r_inv = inverse(r)?.symmetrize();
    let s = b.matmul(&r_inv).matmul(&b.transpose());

    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.set_block(0, 0, a);
    h.set_block(0, n, &s.scale(-1.0));
    h.set_block(n, 0, &q.scale(-1.0));
    h.set_block(n, n, &a.transpose().scale(-1.0));

    let mut schur = SchurForm::new(&h)?;
    let stable = schur.reorder(|re| re < 0.0)?;
    if stable != n {
        return Err(LinalgError::Synthesis(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {n}; \
             check stabilizability of (A, B2) and detectability of (A, Q)"
        )));
    }
    let u = &schur.orthogonal;
    let u11 = u.block(0, 0, n, n);
    let u21 = u.block(n, 0, n, n);
    let p_t = Lu::new(&u11.transpose())
        .map_err(|_| LinalgError::Synthesis("stable subspace is not a graph subspace".into()))?
        .solve(&u21.transpose());
    let mut p = p_t.transpose().symmetrize();
    let mut gain = r_inv.matmul(&b.tr_matmul(&p));

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        let (p_next, gain_next) = newton_kleinman_step(a, b, q, r, &r_inv, &gain)
            .map_err(|e| LinalgError::Synthesis(format!("refinement failed: {e}")))?;
        p = p_next;
        gain = gain_next;
        residual = care_residual(a, b, q, &r_inv, &p);
        if residual <= ARE_RESIDUAL_TOL {
            break;
        }
    }
    if residual > ARE_RESIDUAL_TOL {
        return Err(LinalgError::Synthesis(format!(
            "Riccati residual {residual:e} above tolerance"
        )));
    }
    let abscissa = SchurForm::new(&(a - &b.matmul(&gain)))?.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(LinalgError::Synthesis(format!(
            "closed loop not stable (spectral abscissa {abscissa:e})"
        )));
    }
    Ok(CareSolution { p, gain, residual })
}
