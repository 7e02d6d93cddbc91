mod common;

use common::*;
use rand::Rng;
use sparse_lqr::h2::{gradient, hessian_apply, objective, objective_batch, ClosedLoop};
use sparse_lqr::linalg::{solve_are, Matrix};
use sparse_lqr::model::Plant;
use sparse_lqr::par::Parallelism;

fn fd_gradient(plant: &Plant, f: &Matrix, h: f64) -> Matrix {
    Matrix::from_fn(f.rows(), f.cols(), |i, j| {
        let mut up = f.clone();
        up[(i, j)] += h;
        let mut down = f.clone();
        down[(i, j)] -= h;
        (objective(plant, &up) - objective(plant, &down)) / (2.0 * h)
    })
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = rng(21);
    for k in 0..20 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (plant, f) = random_instance(&mut rng, n, m);
        let g = gradient(&plant, &f).unwrap();
        let fd = fd_gradient(&plant, &f, 1e-6);
        assert!(rel(&g, &fd) < 1e-5, "instance {k}: {:e}", rel(&g, &fd));
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = rng(22);
    for k in 0..20 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (plant, f) = random_instance(&mut rng, n, m);
        let d = random_matrix(&mut rng, m, n);
        let h = 1e-5;
        let up = gradient(&plant, &(&f + &d.scale(h))).unwrap();
        let down = gradient(&plant, &(&f - &d.scale(h))).unwrap();
        let fd = (&up - &down).scale(0.5 / h);
        let hd = hessian_apply(&plant, &f, &d).unwrap();
        assert!(rel(&hd, &fd) < 1e-4, "instance {k}: {:e}", rel(&hd, &fd));
    }
}

#[test]
fn hessian_is_symmetric() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (plant, f) = random_instance(&mut rng, n, m);
        let cl = ClosedLoop::new(&plant, &f).unwrap();
        let (d1, d2) = (random_matrix(&mut rng, m, n), random_matrix(&mut rng, m, n));
        let a = d1.dot(&cl.hessian_apply(&d2).unwrap());
        let b = d2.dot(&cl.hessian_apply(&d1).unwrap());
        assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1.0));
    }
}

#[test]
fn objective_equals_dual_gramian_trace() {
    let mut rng = rng(24);
    for _ in 0..20 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (plant, f) = random_instance(&mut rng, n, m);
        let cl = ClosedLoop::new(&plant, &f).unwrap();
        let weight = &plant.q + &f.tr_matmul(&plant.r.matmul(&f));
        let dual = weight.matmul(cl.l()).trace();
        assert!((cl.objective() - dual).abs() <= 1e-9 * dual.abs());
    }
}

#[test]
fn objective_is_invariant_under_state_permutation() {
    let mut rng = rng(25);
    for _ in 0..10 {
        let (plant, f) = random_instance(&mut rng, 5, 3);
        let mut order: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let perm = Matrix::from_fn(5, 5, |i, j| if order[i] == j { 1.0 } else { 0.0 });
        let sim = |m: &Matrix| perm.matmul(m).matmul(&perm.transpose());
        let permuted = Plant::new(
            sim(&plant.a),
            perm.matmul(&plant.b1),
            perm.matmul(&plant.b2),
            sim(&plant.q),
            plant.r.clone(),
        )
        .unwrap();
        let j = objective(&plant, &f);
        let jp = objective(&permuted, &f.matmul(&perm.transpose()));
        assert!((j - jp).abs() <= 1e-10 * j);
    }
}

#[test]
fn riccati_gain_is_stationary_and_optimal() {
    let mut rng = rng(26);
    for _ in 0..10 {
        let (plant, f) = random_instance(&mut rng, 4, 2);
        let (p, fc) = solve_are(&plant).unwrap();
        let jc = objective(&plant, &fc);
        assert!((jc - plant.b1.tr_matmul(&p).matmul(&plant.b1).trace()).abs() <= 1e-9 * jc);
        assert!(gradient(&plant, &fc).unwrap().frobenius_norm() <= 1e-7 * fc.frobenius_norm().max(1.0));
        assert!(objective(&plant, &f) >= jc);
    }
}

#[test]
fn scalar_objective_closed_form() {
    // J(F) = (1 + F²)/(2(F − 1)) for A = B1 = B2 = Q = R = 1
    let one = Matrix::identity(1);
    let plant = Plant::new(one.clone(), one.clone(), one.clone(), one.clone(), one).unwrap();
    for f in [1.5, 2.0, 1.0 + 2f64.sqrt(), 4.0] {
        let j = objective(&plant, &Matrix::from_diag(&[f]));
        assert!((j - (1.0 + f * f) / (2.0 * (f - 1.0))).abs() < 1e-12);
    }
    assert_eq!(objective(&plant, &Matrix::from_diag(&[0.5])), f64::INFINITY);
    assert_eq!(objective(&plant, &Matrix::from_diag(&[1.0])), f64::INFINITY);
}

#[test]
fn batch_matches_single_evaluations() {
    let mut rng = rng(27);
    let (plant, f) = random_instance(&mut rng, 6, 3);
    let gains: Vec<Matrix> = (0..8).map(|k| f.map(|x| x * (1.0 + 0.05 * k as f64))).collect();
    let seq = objective_batch(&plant, &gains, Parallelism::Sequential);
    let par = objective_batch(&plant, &gains, Parallelism::Rayon);
    assert_eq!(seq.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), par.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    for (g, j) in gains.iter().zip(&seq) {
        assert_eq!(objective(&plant, g).to_bits(), j.to_bits());
    }
}
