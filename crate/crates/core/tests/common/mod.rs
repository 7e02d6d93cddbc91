#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_lqr::admm::{admm_solve, critical_point_certificate, AdmmOptions, AdmmStatus};
use sparse_lqr::h2::objective;
use sparse_lqr::linalg::{solve, solve_are, Matrix};
use sparse_lqr::model::{BlockPartition, Granularity, PenaltyKind, PenaltySpec, Plant, StructureMask};
use sparse_lqr::polish::{polish_gain, PolishOptions, PolishStatus};
use sparse_lqr::prox::{prox, ProxProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// `MᵀM + shift·I`
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> Matrix {
    let m = random_matrix(rng, n, n);
    let mut s = m.tr_matmul(&m);
    for i in 0..n {
        s[(i, i)] += shift;
    }
    s.symmetrize()
}

/// Random matrix shifted left until it is Hurwitz with margin `margin`.
pub fn random_stable(rng: &mut impl Rng, n: usize, margin: f64) -> Matrix {
    let mut a = random_matrix(rng, n, n);
    let alpha = sparse_lqr::linalg::spectral_abscissa(&a).unwrap();
    for i in 0..n {
        a[(i, i)] -= alpha + margin;
    }
    a
}

/// Plant with a random (possibly unstable) `A` and a stabilizing gain that
/// is not optimal.
pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize) -> (Plant, Matrix) {
    loop {
        let mut a = random_matrix(rng, n, n);
        for i in 0..n {
            a[(i, i)] -= 0.5;
        }
        let b1 = random_matrix(rng, n, n.max(1));
        let b2 = random_matrix(rng, n, m);
        let q = random_spd(rng, n, 0.5);
        let r = random_spd(rng, m, 0.5);
        let plant = Plant::new(a, b1, b2, q, r).unwrap();
        let Ok((_, fc)) = sparse_lqr::linalg::solve_are(&plant) else { continue };
        let f = &fc + &random_matrix(rng, m, n).scale(0.3);
        if objective(&plant, &f).is_finite() {
            return (plant, f);
        }
    }
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = b.shape();
    Matrix::from_fn(a.rows() * p, a.cols() * q, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)])
}

/// Column-stacking `vec`.
pub fn vec_cols(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    Matrix::from_fn(r * c, 1, |k, _| m[(k % r, k / r)])
}

pub fn unvec_cols(v: &Matrix, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |i, j| v[(j * r + i, 0)])
}

/// `AᵀX + XA = −rhs` through the `n²×n²` Kronecker system.
pub fn lyapunov_kronecker(a: &Matrix, rhs: &Matrix) -> Matrix {
    let n = a.rows();
    let i = Matrix::identity(n);
    let op = &kron(&i, &a.transpose()) + &kron(&a.transpose(), &i);
    let x = solve(&op, &vec_cols(rhs).scale(-1.0)).unwrap();
    unvec_cols(&x, n, n)
}

/// `2·R·F·L + ρ·F = rhs` through the Kronecker system.
pub fn sylvester_kronecker(r: &Matrix, l: &Matrix, rho: f64, rhs: &Matrix) -> Matrix {
    let (m, n) = rhs.shape();
    let mut op = kron(&l.transpose(), r).scale(2.0);
    for k in 0..m * n {
        op[(k, k)] += rho;
    }
    let x = solve(&op, &vec_cols(rhs)).unwrap();
    unvec_cols(&x, m, n)
}

/// `det(A − λI)` and `tr((A − λI)⁻¹)` by complex Gaussian elimination.
fn det_and_trace_inverse(a: &Matrix, lambda: Complex64) -> (Complex64, Complex64) {
    let n = a.rows();
    let mut m: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Complex64::new(a[(i, j)], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) })
                .collect()
        })
        .collect();
    let mut inv: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let piv = (k..n).max_by(|&x, &y| m[x][k].norm().total_cmp(&m[y][k].norm())).unwrap();
        if piv != k {
            m.swap(piv, k);
            inv.swap(piv, k);
            det = -det;
        }
        let p = m[k][k];
        det *= p;
        if p.norm() == 0.0 {
            return (det, Complex64::new(f64::INFINITY, 0.0));
        }
        for j in 0..n {
            m[k][j] /= p;
            inv[k][j] /= p;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                for j in 0..n {
                    let (mk, ik) = (m[k][j], inv[k][j]);
                    m[i][j] -= f * mk;
                    inv[i][j] -= f * ik;
                }
            }
        }
    }
    let tr = (0..n).map(|i| inv[i][i]).sum();
    (det, tr)
}

/// Eigenvalues from the characteristic polynomial (Faddeev–LeVerrier
/// coefficients, Durand–Kerner roots), each refined by Newton steps on
/// `det(A − λI)`.
pub fn eigenvalues_by_charpoly(a: &Matrix) -> Vec<Complex64> {
    let n = a.rows();
    // p(λ) = λⁿ + c[1]λⁿ⁻¹ + … + c[n]
    let mut c = vec![1.0; n + 1];
    let mut mk = Matrix::zeros(n, n);
    for k in 1..=n {
        let mut prev = mk.clone();
        for i in 0..n {
            prev[(i, i)] += c[k - 1];
        }
        mk = a.matmul(&prev);
        c[k] = -mk.trace() / k as f64;
    }
    let eval = |z: Complex64| c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck);
    let radius = 1.0 + c[1..].iter().fold(0f64, |m, v| m.max(v.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..2000 {
        let mut moved = 0f64;
        for i in 0..n {
            let denom: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| roots[i] - roots[j])
                .product();
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * radius {
            break;
        }
    }
    for z in &mut roots {
        for _ in 0..5 {
            let (det, tr) = det_and_trace_inverse(a, *z);
            if !tr.is_finite() || det.norm() == 0.0 {
                break;
            }
            // d/dλ det(A − λI) = −det·tr((A − λI)⁻¹)
            let step = Complex64::new(1.0, 0.0) / (-tr);
            if !step.is_finite() {
                break;
            }
            *z -= step;
        }
    }
    roots
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Minimum over `t ∈ [0, t_max]` of `f` by a uniform grid followed by
/// golden-section refinement around the best grid cell; the endpoints are
/// evaluated exactly.
pub fn brute_force_min(f: impl Fn(f64) -> f64, t_max: f64, grid: usize) -> (f64, f64) {
    let mut best = (0.0, f(0.0));
    let end = (t_max, f(t_max));
    if end.1 < best.1 {
        best = end;
    }
    let h = t_max / grid as f64;
    let mut cell = 0;
    let mut cell_val = f64::INFINITY;
    for k in 1..grid {
        let v = f(k as f64 * h);
        if v < cell_val {
            cell_val = v;
            cell = k;
        }
    }
    if cell > 0 {
        let lo = (cell as f64 - 1.0) * h;
        let hi = (cell as f64 + 1.0) * h;
        let t = golden_section(&f, lo.max(1e-300), hi.min(t_max), 1e-12 * t_max.max(1.0));
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

pub fn mass_spring_plant(n: usize) -> Plant {
    sparse_lqr::problems::mass_spring(n, 10.0).unwrap()
}

pub fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

pub const KINDS: [PenaltyKind; 3] = [PenaltyKind::WeightedL1, PenaltyKind::Cardinality, PenaltyKind::SumOfLogs];

fn scalar_pen(kind: PenaltyKind, t: f64, w: f64, eps: f64) -> f64 {
    match kind {
        PenaltyKind::WeightedL1 => w * t,
        PenaltyKind::Cardinality => f64::from(u8::from(t != 0.0)),
        PenaltyKind::SumOfLogs => (1.0 + t / eps).ln(),
    }
}

/// `min_{t ≥ 0} γ·pen(t) + (ρ/2)(t − s)²`; the minimiser never exceeds `s`.
fn radial_min(kind: PenaltyKind, s: f64, w: f64, gamma: f64, rho: f64, eps: f64) -> f64 {
    let h = |t: f64| gamma * scalar_pen(kind, t, w, eps) + 0.5 * rho * (t - s) * (t - s);
    if s == 0.0 {
        return 0.0;
    }
    brute_force_min(h, s, 4000).1
}

struct Case {
    gamma: f64,
    rho: f64,
    eps: f64,
}

fn random_case(rng: &mut impl Rng) -> Case {
    Case {
        gamma: 10f64.powf(rng.gen_range(-3.0..1.0)),
        rho: 10f64.powf(rng.gen_range(-1.0..2.0)),
        eps: 10f64.powf(rng.gen_range(-2.0..0.0)),
    }
}

/// Largest excess of the operator's objective over the brute-force value.
pub fn worst_scalar_gap(kind: PenaltyKind, cases: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cases {
        let c = random_case(&mut rng);
        let v = Matrix::from_diag(&[rng.gen_range(-5.0..5.0)]);
        let w = rng.gen_range(0.0..5.0);
        let mut spec = PenaltySpec::elementwise(kind, 1, 1).with_weights(Matrix::from_diag(&[w])).unwrap();
        spec.epsilon_log = c.eps;
        let p = ProxProblem { v: &v, gamma: c.gamma, rho: c.rho, spec: &spec };
        let g = prox(&p).unwrap();
        let w_eff = if kind == PenaltyKind::WeightedL1 { w } else { 1.0 };
        let best = radial_min(kind, v[(0, 0)].abs(), w_eff, c.gamma, c.rho, c.eps);
        let got = p.objective(&g).unwrap();
        worst = worst.max((got - best) / best.abs().max(1.0));
    }
    worst
}

pub fn worst_block_gap(kind: PenaltyKind, cases: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cases {
        let c = random_case(&mut rng);
        let rows: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=3)).collect();
        let cols: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=3)).collect();
        let part = BlockPartition::new(rows, cols).unwrap();
        let (m, n) = (part.total_rows(), part.total_cols());
        let v = random_matrix(&mut rng, m, n).scale(rng.gen_range(0.1..4.0));
        let (gm, gn) = part.grid();
        let w = Matrix::from_fn(gm, gn, |_, _| rng.gen_range(0.0..5.0));
        let mut spec = PenaltySpec::new(kind, Granularity::Blockwise(part.clone()), m, n)
            .unwrap()
            .with_weights(w.clone())
            .unwrap();
        spec.epsilon_log = c.eps;
        let p = ProxProblem { v: &v, gamma: c.gamma, rho: c.rho, spec: &spec };
        let g = prox(&p).unwrap();
        let best: f64 = part
            .blocks()
            .iter()
            .map(|b| {
                let w_eff = if kind == PenaltyKind::WeightedL1 { w[(b.bi, b.bj)] } else { 1.0 };
                radial_min(kind, part.block_norm(&v, b), w_eff, c.gamma, c.rho, c.eps)
            })
            .sum();
        let got = p.objective(&g).unwrap();
        worst = worst.max((got - best) / best.abs().max(1.0));
    }
    worst
}

/// Runs γ = 0 ADMM from a perturbed Riccati gain.
pub fn zero_gamma_gap(plant: &Plant, seed: u64) -> (f64, f64, AdmmStatus) {
    let mut rng = rng(seed);
    let (p, fc) = solve_are(plant).unwrap();
    let start = &fc + &random_matrix(&mut rng, fc.rows(), fc.cols()).scale(0.05 * fc.max_abs().max(1.0));
    assert!(objective(plant, &start).is_finite());
    let spec = PenaltySpec::elementwise(PenaltyKind::WeightedL1, plant.m(), plant.n());
    let opts = AdmmOptions { rho: 1.0, eps_stop: 1e-10, am_grad_tol: 1e-12, ..AdmmOptions::default() };
    let out = admm_solve(plant, 0.0, &spec, &start, &opts).unwrap();
    let j_are = plant.b1.tr_matmul(&p).matmul(&plant.b1).trace();
    let j = objective(plant, &out.state.f);
    (rel(&out.state.f, &fc), (j - j_are).abs() / j_are, out.status)
}

/// Certificate of a converged weighted-ℓ1 run with a tight stop, as the
/// largest residual over the problem scale.
pub fn certificate_ratio(plant: &Plant, gamma: f64) -> (f64, AdmmStatus, usize) {
    let (_, fc) = solve_are(plant).unwrap();
    let spec = PenaltySpec::elementwise(PenaltyKind::WeightedL1, plant.m(), plant.n());
    let opts = AdmmOptions { eps_stop: 1e-6, max_iter: 20_000, ..AdmmOptions::default() };
    let out = admm_solve(plant, gamma, &spec, &fc, &opts).unwrap();
    let cert = critical_point_certificate(plant, &out.state, gamma, &spec).unwrap();
    let nnz = out.state.g.as_slice().iter().filter(|v| **v != 0.0).count();
    (cert.max_residual() / cert.scale, out.status, nnz)
}

/// Dense-mask polishing from a perturbed start; returns the relative gain
/// error and whether the history strictly decreased.
pub fn dense_polish(plant: &Plant, seed: u64) -> (f64, bool, PolishStatus) {
    let mut rng = rng(seed);
    let (_, fc) = solve_are(plant).unwrap();
    let mut start;
    loop {
        start = &fc + &random_matrix(&mut rng, fc.rows(), fc.cols()).scale(0.2 * fc.max_abs().max(1.0));
        if objective(plant, &start).is_finite() {
            break;
        }
    }
    let mask = StructureMask::full(plant.m(), plant.n());
    let out = polish_gain(plant, &mask, &start, &PolishOptions::default()).unwrap();
    let decreasing = out.history.windows(2).all(|w| w[1] < w[0]) && out.history.iter().all(|j| j.is_finite());
    (rel(&out.gain, &fc), decreasing, out.status)
}

