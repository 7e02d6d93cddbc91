use super::{LinalgError, Matrix};

/// LU factorisation with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
                return Err(LinalgError::Singular);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= factor * u;
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    /// Solves `A·X = B` for every column of `B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.lu.rows();
        assert_eq!(b.rows(), n, "LU solve: rhs has wrong row count");
        let m = b.cols();
        let mut x = Matrix::from_fn(n, m, |i, j| b[(self.perm[i], j)]);
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                if l != 0.0 {
                    for j in 0..m {
                        let v = x[(k, j)];
                        x[(i, j)] -= l * v;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                if u != 0.0 {
                    for j in 0..m {
                        let v = x[(k, j)];
                        x[(i, j)] -= u * v;
                    }
                }
            }
            let d = self.lu[(i, i)];
            for j in 0..m {
                x[(i, j)] /= d;
            }
        }
        x
    }
}

/// Solves `A·X = B` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    Ok(Lu::new(a)?.solve(b))
}

pub fn inverse(a: &Matrix) -> Result<Matrix, LinalgError> {
    solve(a, &Matrix::identity(a.rows()))
}

/// Gaussian elimination on a tiny system held in a fixed-size array. Used by
/// the 1x1/2x2 block solves inside the Schur-based kernels.
pub(crate) fn solve_small<const N: usize>(
    a: &mut [[f64; N]; N],
    b: &mut [f64; N],
    n: usize,
) -> Result<(), LinalgError> {
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[i][k].abs() > a[p][k].abs() {
                p = i;
            }
        }
        if a[p][k] == 0.0 {
            return Err(LinalgError::Singular);
        }
        a.swap(p, k);
        b.swap(p, k);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * b[j];
        }
        b[i] = s / a[i][i];
    }
    Ok(())
}
