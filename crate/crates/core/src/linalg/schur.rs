//! Real Schur decomposition `A = U·T·Uᵀ`.
//!
//! Householder reduction to upper Hessenberg form, then Francis double-shift
//! QR sweeps with deflation. Converged 2x2 blocks with real eigenvalues are
//! split, so every remaining 2x2 diagonal block carries a complex pair.
//! Adjacent diagonal blocks can be swapped to reorder the spectrum.

use serde::{Deserialize, Serialize};

use super::lu::solve_small;
use super::{LinalgError, Matrix};

/// Sweeps allowed per unit of dimension before giving up.
const MAX_SWEEPS_PER_DIM: usize = 100;

/// Orthogonal `U` and quasi upper triangular `T` with `A = U·T·Uᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchurForm {
    pub orthogonal: Matrix,
    pub quasi_triangular: Matrix,
}

/// One diagonal block of `T`: its first row/column and size (1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagBlock {
    pub start: usize,
    pub size: usize,
}

impl SchurForm {
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!(
                "Schur decomposition needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut t = a.clone();
        let mut u = Matrix::identity(a.rows());
        hessenberg(&mut t, &mut u);
        francis(&mut t, &mut u)?;
        Ok(SchurForm {
            orthogonal: u,
            quasi_triangular: t,
        })
    }

    pub fn dim(&self) -> usize {
        self.quasi_triangular.rows()
    }

    pub fn blocks(&self) -> Vec<DiagBlock> {
        diag_blocks(&self.quasi_triangular)
    }

    /// Eigenvalues as `(re, im)` pairs in diagonal order.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let t = &self.quasi_triangular;
        let mut out = Vec::with_capacity(self.dim());
        for b in self.blocks() {
            out.extend(block_eigenvalues(t, b));
        }
        out
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.orthogonal
            .matmul(&self.quasi_triangular)
            .matmul(&self.orthogonal.transpose())
    }

    /// Moves every block whose eigenvalues satisfy `select(re)` to the top
    /// left, keeping the relative order within each group. Returns the
    /// dimension of the selected invariant subspace.
    pub fn reorder<F: Fn(f64) -> bool>(&mut self, select: F) -> Result<usize, LinalgError> {
        let n = self.dim();
        let mut filled = 0;
        let mut pos = 0;
        while pos < n {
            let size = block_size_at(&self.quasi_triangular, pos);
            let re = block_eigenvalues(&self.quasi_triangular, DiagBlock { start: pos, size })[0].0;
            if select(re) {
                let mut cur = pos;
                while cur > filled {
                    let prev = if cur >= filled + 2 && self.quasi_triangular[(cur - 1, cur - 2)] != 0.0 {
                        2
                    } else {
                        1
                    };
                    swap_blocks(
                        &mut self.quasi_triangular,
                        &mut self.orthogonal,
                        cur - prev,
                        prev,
                        size,
                    )?;
                    cur -= prev;
                }
                filled += size;
            }
            pos += size;
        }
        Ok(filled)
    }
}

pub(crate) fn block_size_at(t: &Matrix, pos: usize) -> usize {
    if pos + 1 < t.rows() && t[(pos + 1, pos)] != 0.0 {
        2
    } else {
        1
    }
}

pub(crate) fn diag_blocks(t: &Matrix) -> Vec<DiagBlock> {
    let n = t.rows();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < n {
        let size = block_size_at(t, pos);
        out.push(DiagBlock { start: pos, size });
        pos += size;
    }
    out
}

fn block_eigenvalues(t: &Matrix, b: DiagBlock) -> Vec<(f64, f64)> {
    let k = b.start;
    if b.size == 1 {
        return vec![(t[(k, k)], 0.0)];
    }
    let (a, bb, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let p = 0.5 * (a - d);
    let disc = p * p + bb * c;
    let mid = 0.5 * (a + d);
    if disc < 0.0 {
        let im = (-disc).sqrt();
        vec![(mid, im), (mid, -im)]
    } else {
        let r = disc.sqrt();
        vec![(mid + r, 0.0), (mid - r, 0.0)]
    }
}

/// Householder vector for `x`: returns `(v, beta)` with
/// `(I - beta·v·vᵀ)·x = alpha·e1`.
fn householder<const N: usize>(x: [f64; N]) -> ([f64; N], f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (x, 0.0);
    }
    let alpha = if x[0] > 0.0 { -norm } else { norm };
    let mut v = x;
    v[0] -= alpha;
    let vtv: f64 = v.iter().map(|a| a * a).sum();
    if vtv == 0.0 {
        return (v, 0.0);
    }
    (v, 2.0 / vtv)
}

/// `rows[r0..r0+N]` of `m`, columns `c0..`, overwritten by `(I - beta vvᵀ)·M`.
fn reflect_rows<const N: usize>(m: &mut Matrix, r0: usize, c0: usize, v: &[f64; N], beta: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for j in c0..cols {
        let mut w = 0.0;
        for (a, vi) in v.iter().enumerate() {
            w += vi * data[(r0 + a) * cols + j];
        }
        w *= beta;
        for (a, vi) in v.iter().enumerate() {
            data[(r0 + a) * cols + j] -= w * vi;
        }
    }
}

/// Columns `c0..c0+N` of rows `0..r_end`, overwritten by `M·(I - beta vvᵀ)`.
fn reflect_cols<const N: usize>(m: &mut Matrix, c0: usize, r_end: usize, v: &[f64; N], beta: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for i in 0..r_end {
        let row = &mut data[i * cols + c0..i * cols + c0 + N];
        let mut w = 0.0;
        for (x, vi) in row.iter().zip(v) {
            w += x * vi;
        }
        w *= beta;
        for (x, vi) in row.iter_mut().zip(v) {
            *x -= w * vi;
        }
    }
}

fn hessenberg(t: &mut Matrix, u: &mut Matrix) {
    let n = t.rows();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n - 2 {
        let len = n - k - 1;
        let norm = (k + 1..n).map(|i| t[(i, k)] * t[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = t[(k + 1, k)];
        let alpha = if x0 > 0.0 { -norm } else { norm };
        for i in 0..len {
            v[i] = t[(k + 1 + i, k)];
        }
        v[0] -= alpha;
        let vtv: f64 = v[..len].iter().map(|a| a * a).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // rows k+1.. : T = (I - beta vvᵀ) T
        for x in w.iter_mut() {
            *x = 0.0;
        }
        for i in 0..len {
            let vi = v[i];
            let row = t.row(k + 1 + i);
            for j in k..n {
                w[j] += vi * row[j];
            }
        }
        for i in 0..len {
            let vi = beta * v[i];
            let row = t.row_mut(k + 1 + i);
            for j in k..n {
                row[j] -= vi * w[j];
            }
        }
        // columns k+1.. : M = M (I - beta vvᵀ), for T and U
        for m in [&mut *t, &mut *u] {
            for i in 0..n {
                let row = m.row_mut(i);
                let s: f64 = row[k + 1..].iter().zip(&v[..len]).map(|(a, b)| a * b).sum();
                let s = s * beta;
                for (x, vi) in row[k + 1..].iter_mut().zip(&v[..len]) {
                    *x -= s * vi;
                }
            }
        }
        t[(k + 1, k)] = alpha;
        for i in k + 2..n {
            t[(i, k)] = 0.0;
        }
    }
}

fn francis(t: &mut Matrix, u: &mut Matrix) -> Result<(), LinalgError> {
    let n = t.rows();
    if n == 0 {
        return Ok(());
    }
    let norm = t.max_abs().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let max_sweeps = MAX_SWEEPS_PER_DIM * n.max(1);
    let mut sweeps = 0;
    let mut since_deflation = 0;
    let mut hi = n - 1;
    loop {
        // locate the start of the active unreduced block
        let mut l = hi;
        while l > 0 {
            let s = t[(l - 1, l - 1)].abs() + t[(l, l)].abs();
            let s = if s == 0.0 { norm } else { s };
            if t[(l, l - 1)].abs() <= eps * s {
                t[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        if l == hi {
            since_deflation = 0;
            if hi == 0 {
                break;
            }
            hi -= 1;
            continue;
        }
        if l + 1 == hi {
            split_real_pair(t, u, l);
            since_deflation = 0;
            if hi < 2 {
                break;
            }
            hi -= 2;
            continue;
        }
        sweeps += 1;
        since_deflation += 1;
        if sweeps > max_sweeps {
            return Err(LinalgError::NoConvergence("real Schur QR iteration"));
        }
        let (s, p) = if since_deflation % 11 == 10 {
            // exceptional shift
            let w = t[(hi, hi - 1)].abs() + t[(hi - 1, hi - 2)].abs();
            (1.5 * w, w * w)
        } else {
            let (a, b, c, d) = (
                t[(hi - 1, hi - 1)],
                t[(hi - 1, hi)],
                t[(hi, hi - 1)],
                t[(hi, hi)],
            );
            (a + d, a * d - b * c)
        };
        francis_step(t, u, l, hi, s, p);
    }
    Ok(())
}

fn francis_step(t: &mut Matrix, u: &mut Matrix, l: usize, hi: usize, s: f64, p: f64) {
    let n = t.rows();
    let mut x = t[(l, l)] * t[(l, l)] + t[(l, l + 1)] * t[(l + 1, l)] - s * t[(l, l)] + p;
    let mut y = t[(l + 1, l)] * (t[(l, l)] + t[(l + 1, l + 1)] - s);
    let mut z = t[(l + 1, l)] * t[(l + 2, l + 1)];
    for k in l..=hi - 2 {
        let (v, beta) = householder([x, y, z]);
        if beta != 0.0 {
            let q = if k > l { k - 1 } else { l };
            reflect_rows(t, k, q, &v, beta);
            let r = (k + 3).min(hi) + 1;
            reflect_cols(t, k, r, &v, beta);
            reflect_cols(u, k, n, &v, beta);
            if k > l {
                t[(k + 1, k - 1)] = 0.0;
                t[(k + 2, k - 1)] = 0.0;
            }
        }
        x = t[(k + 1, k)];
        y = t[(k + 2, k)];
        if k + 3 <= hi {
            z = t[(k + 3, k)];
        }
    }
    let (v, beta) = householder([x, y]);
    if beta != 0.0 {
        reflect_rows(t, hi - 1, hi - 2, &v, beta);
        reflect_cols(t, hi - 1, hi + 1, &v, beta);
        reflect_cols(u, hi - 1, n, &v, beta);
        t[(hi, hi - 2)] = 0.0;
    }
}

/// Applies the plane rotation with first column `(cs, sn)` as `Gᵀ·T·G` on
/// rows/columns `k, k+1`.
fn rotate(t: &mut Matrix, u: &mut Matrix, k: usize, cs: f64, sn: f64) {
    let n = t.rows();
    for j in k..n {
        let (a, b) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = cs * a + sn * b;
        t[(k + 1, j)] = -sn * a + cs * b;
    }
    for m in [&mut *t, &mut *u] {
        for i in 0..n {
            let (a, b) = (m[(i, k)], m[(i, k + 1)]);
            m[(i, k)] = cs * a + sn * b;
            m[(i, k + 1)] = -sn * a + cs * b;
        }
    }
}

/// Triangularises the 2x2 block at `k` when its eigenvalues are real.
fn split_real_pair(t: &mut Matrix, u: &mut Matrix, k: usize) {
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    if c == 0.0 {
        return;
    }
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    if disc < 0.0 {
        return;
    }
    let r = disc.sqrt();
    let lambda = 0.5 * (a + d) + if p >= 0.0 { r } else { -r };
    let (vx, vy) = (lambda - d, c);
    let h = vx.hypot(vy);
    rotate(t, u, k, vx / h, vy / h);
    t[(k + 1, k)] = 0.0;
}

/// Swaps the adjacent diagonal blocks of sizes `p` (at `j`) and `q`
/// (at `j + p`), updating `U` so that `A = U·T·Uᵀ` still holds.
fn swap_blocks(
    t: &mut Matrix,
    u: &mut Matrix,
    j: usize,
    p: usize,
    q: usize,
) -> Result<(), LinalgError> {
    let n = t.rows();
    let w = p + q;
    // T11·X − X·T22 = T12, column-major vec(X)
    let mut sys = [[0.0; 4]; 4];
    let mut rhs = [0.0; 4];
    for b in 0..q {
        for a in 0..p {
            let row = a + b * p;
            rhs[row] = t[(j + a, j + p + b)];
            for c in 0..p {
                sys[row][c + b * p] += t[(j + a, j + c)];
            }
            for d in 0..q {
                sys[row][a + d * p] -= t[(j + p + d, j + p + b)];
            }
        }
    }
    solve_small(&mut sys, &mut rhs, p * q).map_err(|_| LinalgError::ReorderFailed)?;

    // Z = [−X; I_q]; Q from Householder QR of Z
    let mut z = Matrix::zeros(w, q);
    for a in 0..p {
        for b in 0..q {
            z[(a, b)] = -rhs[a + b * p];
        }
    }
    for b in 0..q {
        z[(p + b, b)] = 1.0;
    }
    let mut qm = Matrix::identity(w);
    for c in 0..q {
        let len = w - c;
        let mut v = [0.0; 4];
        for i in 0..len {
            v[i] = z[(c + i, c)];
        }
        let norm = v[..len].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv: f64 = v[..len].iter().map(|a| a * a).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        for jj in c..q {
            let s: f64 = (0..len).map(|i| v[i] * z[(c + i, jj)]).sum::<f64>() * beta;
            for i in 0..len {
                z[(c + i, jj)] -= s * v[i];
            }
        }
        for i in 0..w {
            let s: f64 = (0..len).map(|a| qm[(i, c + a)] * v[a]).sum::<f64>() * beta;
            for a in 0..len {
                qm[(i, c + a)] -= s * v[a];
            }
        }
    }

    // T[j..j+w, j..] = Qᵀ · T[j..j+w, j..]
    let mut buf = vec![0.0; w];
    for col in j..n {
        for (r, slot) in buf.iter_mut().enumerate() {
            *slot = (0..w).map(|a| qm[(a, r)] * t[(j + a, col)]).sum();
        }
        for (r, &val) in buf.iter().enumerate() {
            t[(j + r, col)] = val;
        }
    }
    // M[:, j..j+w] = M[:, j..j+w] · Q for T (rows 0..j+w) and U (all rows)
    for (m, rows) in [(&mut *t, j + w), (&mut *u, n)] {
        for i in 0..rows {
            for (c, slot) in buf.iter_mut().enumerate() {
                *slot = (0..w).map(|a| m[(i, j + a)] * qm[(a, c)]).sum();
            }
            for (c, &val) in buf.iter().enumerate() {
                m[(i, j + c)] = val;
            }
        }
    }
    let scale = t.max_abs().max(1.0);
    for r in q..w {
        for c in 0..q {
            if t[(j + r, j + c)].abs() > 1e-8 * scale {
                return Err(LinalgError::ReorderFailed);
            }
            t[(j + r, j + c)] = 0.0;
        }
    }
    // new blocks: size q at j, size p at j+q
    if q == 2 {
        split_real_pair(t, u, j);
    }
    if p == 2 {
        split_real_pair(t, u, j + q);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn check_form(a: &Matrix, s: &SchurForm) {
        let n = a.rows();
        let scale = a.max_abs().max(1.0);
        let recon = (&s.reconstruct() - a).max_abs();
        assert!(recon < 1e-12 * scale * n as f64, "reconstruction error {recon}");
        let utu = s.orthogonal.tr_matmul(&s.orthogonal);
        assert!((&utu - &Matrix::identity(n)).max_abs() < 1e-12 * n as f64);
        let t = &s.quasi_triangular;
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                assert_eq!(t[(i, j)], 0.0, "below subdiagonal at ({i},{j})");
            }
        }
        for i in 1..n - 1 {
            assert!(
                t[(i, i - 1)] == 0.0 || t[(i + 1, i)] == 0.0,
                "consecutive subdiagonals at {i}"
            );
        }
        for b in s.blocks() {
            if b.size == 2 {
                let ev = block_eigenvalues(t, b);
                assert!(ev[0].1 != 0.0, "2x2 block with real eigenvalues");
            }
        }
    }

    #[test]
    fn random_matrices_decompose() {
        for (n, seed) in [(1, 0), (2, 1), (3, 2), (6, 3), (10, 4), (31, 5), (64, 6)] {
            let a = random(n, seed);
            let s = SchurForm::new(&a).unwrap();
            check_form(&a, &s);
        }
    }

    #[test]
    fn rotation_generator_has_imaginary_pair() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let s = SchurForm::new(&a).unwrap();
        let ev = s.eigenvalues();
        assert!(ev.iter().all(|e| e.0.abs() < 1e-15 && (e.1.abs() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reorder_moves_stable_blocks_first() {
        for seed in 0..8 {
            let a = random(12, 100 + seed);
            let mut s = SchurForm::new(&a).unwrap();
            let stable_before = s.eigenvalues().iter().filter(|e| e.0 < 0.0).count();
            let k = s.reorder(|re| re < 0.0).unwrap();
            assert_eq!(k, stable_before);
            check_form(&a, &s);
            let ev = s.eigenvalues();
            assert!(ev[..k].iter().all(|e| e.0 < 0.0));
            assert!(ev[k..].iter().all(|e| e.0 >= 0.0));
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(SchurForm::new(&Matrix::zeros(2, 3)).is_err());
    }
}
