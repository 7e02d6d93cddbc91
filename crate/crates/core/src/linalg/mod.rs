//! Dense linear-algebra kernels: Schur, Lyapunov, Sylvester and Riccati.

mod lu;
mod lyapunov;
mod matrix;
mod riccati;
mod schur;
mod symeig;

use thiserror::Error;

pub use lu::{inverse, solve, Lu};
pub use lyapunov::LyapunovSolver;
pub use matrix::Matrix;
pub use riccati::{care_residual, newton_kleinman_step, solve_care, CareSolution, ARE_RESIDUAL_TOL};
pub use schur::{DiagBlock, SchurForm};
pub use symeig::SymmetricEigen;

use crate::model::Plant;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("matrix is not Hurwitz (spectral abscissa {0:e})")]
    Unstable(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("reordering of the Schur form failed")]
    ReorderFailed,
    #[error("Riccati synthesis failed: {0}")]
    Synthesis(String),
}

/// Largest real part over the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Matrix) -> Result<f64, LinalgError> {
    Ok(SchurForm::new(m)?.spectral_abscissa())
}

/// Solves `Aclᵀ·P + P·Acl = −rhs`.
pub fn solve_lyapunov(acl: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    if !acl.is_square() {
        return Err(LinalgError::Dimension(format!(
            "closed-loop matrix is {}x{}",
            acl.rows(),
            acl.cols()
        )));
    }
    LyapunovSolver::new(acl)?.solve_observability(rhs)
}

/// Solver for `2·R·F·L + ρ·F = rhs` with `R` symmetric positive definite and
/// `L` symmetric positive semidefinite. The eigendecomposition of `R` is
/// computed once and reused across right-hand sides.
#[derive(Debug, Clone)]
pub struct SpdSylvester {
    r: SymmetricEigen,
}

impl SpdSylvester {
    pub fn new(r: &Matrix) -> Result<Self, LinalgError> {
        if !r.is_symmetric(1e-10) {
            return Err(LinalgError::NotPositiveDefinite(f64::NAN));
        }
        let eig = SymmetricEigen::new(r)?;
        let min = eig.min_value();
        if min.is_nan() || min <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite(min));
        }
        Ok(SpdSylvester { r: eig })
    }

    pub fn solve(&self, l: &Matrix, rho: f64, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        let m = self.r.values.len();
        let n = l.rows();
        if !l.is_square() || rhs.shape() != (m, n) {
            return Err(LinalgError::Dimension(format!(
                "Sylvester data: R {m}x{m}, L {}x{}, rhs {}x{}",
                l.rows(),
                l.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        if !(rho > 0.0) {
            return Err(LinalgError::Dimension(format!("rho must be positive, got {rho}")));
        }
        let le = SymmetricEigen::new(l)?;
        let vr = &self.r.vectors;
        let vl = &le.vectors;
        let mut hat = vr.tr_matmul(rhs).matmul(vl);
        for i in 0..m {
            for j in 0..n {
                let denom = 2.0 * self.r.values[i] * le.values[j] + rho;
                if denom <= 0.0 {
                    return Err(LinalgError::NotPositiveDefinite(le.values[j]));
                }
                hat[(i, j)] /= denom;
            }
        }
        Ok(vr.matmul(&hat).matmul(&vl.transpose()))
    }
}

/// Solves `2·R·F·L + ρ·F = rhs`.
pub fn solve_spd_sylvester(r: &Matrix, l: &Matrix, rho: f64, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    SpdSylvester::new(r)?.solve(l, rho, rhs)
}

/// Stabilising Riccati solution `P` and centralized gain `F_c = R⁻¹·B2ᵀ·P`.
pub fn solve_are(plant: &Plant) -> Result<(Matrix, Matrix), LinalgError> {
    let sol = solve_care(&plant.a, &plant.b2, &plant.q, &plant.r)?;
    Ok((sol.p, sol.gain))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abscissa_of_simple_matrices() {
        let d = Matrix::from_diag(&[-1.0, -2.0]);
        assert_eq!(spectral_abscissa(&d).unwrap(), -1.0);
        let rot = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(spectral_abscissa(&rot).unwrap().abs() < 1e-15);
        assert!(spectral_abscissa(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn lyapunov_trivial_cases() {
        let p = solve_lyapunov(&Matrix::from_diag(&[-1.0]), &Matrix::from_diag(&[4.0])).unwrap();
        assert!((p[(0, 0)] - 2.0).abs() < 1e-15);
        let q = Matrix::from_rows(&[[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]]).unwrap();
        let p = solve_lyapunov(&Matrix::identity(3).scale(-1.0), &q).unwrap();
        assert!((&p - &q.scale(0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn sylvester_trivial_cases() {
        let m = Matrix::from_rows(&[[1.0, -2.0, 3.0], [4.0, 0.5, -6.0]]).unwrap();
        let f = solve_spd_sylvester(&Matrix::identity(2), &Matrix::zeros(3, 3), 2.0, &m).unwrap();
        assert!((&f - &m.scale(0.5)).max_abs() < 1e-15);
        let f = solve_spd_sylvester(
            &Matrix::from_diag(&[1.0]),
            &Matrix::from_diag(&[3.0]),
            2.0,
            &Matrix::from_diag(&[16.0]),
        )
        .unwrap();
        assert!((f[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sylvester_rejects_indefinite_r() {
        let r = Matrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            solve_spd_sylvester(&r, &Matrix::identity(1), 1.0, &Matrix::zeros(2, 1)),
            Err(LinalgError::NotPositiveDefinite(_))
        ));
    }
}
