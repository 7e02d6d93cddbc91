//! Bartels–Stewart Lyapunov solves on a cached real Schur form.
//!
//! One Schur factorisation of the closed-loop matrix serves both Gramian
//! equations and every Hessian direction, which is where most of the H2 cost
//! goes.

use super::lu::solve_small;
use super::schur::{diag_blocks, DiagBlock, SchurForm};
use super::{LinalgError, Matrix};

#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    schur: SchurForm,
    blocks: Vec<DiagBlock>,
    /// `J·Tᵀ·J` with `J` the reversal permutation, used for `A·X + X·Aᵀ`.
    flipped: Matrix,
    flipped_blocks: Vec<DiagBlock>,
    abscissa: f64,
}

impl LyapunovSolver {
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        let schur = SchurForm::new(a)?;
        Ok(Self::from_schur(schur))
    }

    pub fn from_schur(schur: SchurForm) -> Self {
        let t = &schur.quasi_triangular;
        let n = t.rows();
        let flipped = Matrix::from_fn(n, n, |i, j| t[(n - 1 - j, n - 1 - i)]);
        let blocks = diag_blocks(t);
        let flipped_blocks = diag_blocks(&flipped);
        let abscissa = schur.spectral_abscissa();
        LyapunovSolver {
            schur,
            blocks,
            flipped,
            flipped_blocks,
            abscissa,
        }
    }

    pub fn dim(&self) -> usize {
        self.schur.dim()
    }

    pub fn schur(&self) -> &SchurForm {
        &self.schur
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn is_stable(&self) -> bool {
        self.abscissa < 0.0
    }

    fn check(&self, rhs: &Matrix) -> Result<(), LinalgError> {
        let n = self.dim();
        if rhs.shape() != (n, n) {
            return Err(LinalgError::Dimension(format!(
                "Lyapunov right-hand side is {}x{}, expected {n}x{n}",
                rhs.rows(),
                rhs.cols()
            )));
        }
        if !self.is_stable() {
            return Err(LinalgError::Unstable(self.abscissa));
        }
        Ok(())
    }

    /// Solves `Aᵀ·X + X·A = −rhs` for symmetric `rhs`; the result is symmetric.
    pub fn solve_observability(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        self.check(rhs)?;
        let u = &self.schur.orthogonal;
        let m = u.tr_matmul(&rhs.symmetrize()).matmul(u).scale(-1.0);
        let x = solve_quasi_triangular(&self.schur.quasi_triangular, &self.blocks, &m, true)?;
        Ok(u.matmul(&x).matmul(&u.transpose()).symmetrize())
    }

    /// Solves `A·X + X·Aᵀ = −rhs` for symmetric `rhs`; the result is symmetric.
    pub fn solve_controllability(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        self.check(rhs)?;
        let n = self.dim();
        let u = &self.schur.orthogonal;
        let m = u.tr_matmul(&rhs.symmetrize()).matmul(u);
        let m_rev = Matrix::from_fn(n, n, |i, j| -m[(n - 1 - i, n - 1 - j)]);
        let y_rev = solve_quasi_triangular(&self.flipped, &self.flipped_blocks, &m_rev, true)?;
        let y = Matrix::from_fn(n, n, |i, j| y_rev[(n - 1 - i, n - 1 - j)]);
        Ok(u.matmul(&y).matmul(&u.transpose()).symmetrize())
    }
}

/// Solves `Sᵀ·X + X·S = M` for upper quasi-triangular `S`.
///
/// With `symmetric` set, `M` must be symmetric and only the lower block
/// triangle is computed; the upper triangle is mirrored.
pub(crate) fn solve_quasi_triangular(
    s: &Matrix,
    blocks: &[DiagBlock],
    m: &Matrix,
    symmetric: bool,
) -> Result<Matrix, LinalgError> {
    let n = s.rows();
    let st = s.transpose();
    let mut x = Matrix::zeros(n, n);
    // work[b*n + r]: right-hand side of row r in column c0+b
    let mut work = vec![0.0; 2 * n];
    // col[b*n + k] = X[k][c0+b] for the rows known so far
    let mut col = vec![0.0; 2 * n];
    for (jb, bj) in blocks.iter().enumerate() {
        let (c0, w) = (bj.start, bj.size);
        let first_row_block = if symmetric { jb } else { 0 };
        let row_start = blocks[first_row_block].start;
        for b in 0..w {
            let s_col = &st.row(c0 + b)[..c0];
            for r in row_start..n {
                work[b * n + r] = m[(r, c0 + b)] - dot(&x.row(r)[..c0], s_col);
            }
            col[b * n..b * n + row_start].copy_from_slice(&x.row(c0 + b)[..row_start]);
        }
        for bi in &blocks[first_row_block..] {
            let (r0, h) = (bi.start, bi.size);
            let mut rhs = [0.0; 4];
            let mut sys = [[0.0; 4]; 4];
            for a in 0..h {
                let s_col = &st.row(r0 + a)[..r0];
                for b in 0..w {
                    rhs[a + b * h] = work[b * n + r0 + a] - dot(s_col, &col[b * n..b * n + r0]);
                }
            }
            // S_iiᵀ·Y + Y·S_jj, column-major vec(Y)
            for b in 0..w {
                for a in 0..h {
                    let row = a + b * h;
                    for c in 0..h {
                        sys[row][c + b * h] += s[(r0 + c, r0 + a)];
                    }
                    for d in 0..w {
                        sys[row][a + d * h] += s[(c0 + d, c0 + b)];
                    }
                }
            }
            solve_small(&mut sys, &mut rhs, h * w)?;
            for a in 0..h {
                for b in 0..w {
                    let v = rhs[a + b * h];
                    x[(r0 + a, c0 + b)] = v;
                    col[b * n + r0 + a] = v;
                    if symmetric {
                        x[(c0 + b, r0 + a)] = v;
                    }
                }
            }
        }
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = SchurForm::new(&a).unwrap().spectral_abscissa() + 0.5;
        &a - &Matrix::identity(n).scale(shift)
    }

    #[test]
    fn both_orientations_satisfy_their_equations() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (12, 4), (30, 5)] {
            let a = random_stable(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let c = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).symmetrize();
            let solver = LyapunovSolver::new(&a).unwrap();
            let p = solver.solve_observability(&c).unwrap();
            let res = &(&a.tr_matmul(&p) + &p.matmul(&a)) + &c;
            assert!(res.frobenius_norm() < 1e-11 * (1.0 + p.frobenius_norm()), "n={n}");
            let l = solver.solve_controllability(&c).unwrap();
            let res = &(&a.matmul(&l) + &l.matmul(&a.transpose())) + &c;
            assert!(res.frobenius_norm() < 1e-11 * (1.0 + l.frobenius_norm()), "n={n}");
        }
    }

    #[test]
    fn unstable_matrix_is_rejected() {
        let solver = LyapunovSolver::new(&Matrix::identity(2)).unwrap();
        assert!(matches!(
            solver.solve_observability(&Matrix::identity(2)),
            Err(LinalgError::Unstable(_))
        ));
    }

    #[test]
    fn general_triangular_solve_matches_symmetric_path() {
        let a = random_stable(7, 9);
        let schur = SchurForm::new(&a).unwrap();
        let blocks = diag_blocks(&schur.quasi_triangular);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = Matrix::from_fn(7, 7, |_, _| rng.gen_range(-1.0..1.0)).symmetrize();
        let full = solve_quasi_triangular(&schur.quasi_triangular, &blocks, &m, false).unwrap();
        let sym = solve_quasi_triangular(&schur.quasi_triangular, &blocks, &m, true).unwrap();
        assert!((&full - &sym).max_abs() < 1e-12);
    }
}
