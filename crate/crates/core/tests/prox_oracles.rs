mod common;

use common::*;
use proptest::prelude::*;
use sparse_lqr::linalg::Matrix;
use sparse_lqr::model::{BlockPartition, Granularity, PenaltyKind, PenaltySpec};
use sparse_lqr::par::Parallelism;
use sparse_lqr::prox::{prox, prox_with, soft_threshold, truncate, ProxProblem};

#[test]
fn scalar_cases_match_brute_force() {
    for (k, kind) in KINDS.into_iter().enumerate() {
        let gap = worst_scalar_gap(kind, 1000, 100 + k as u64);
        assert!(gap <= 1e-8, "{kind:?}: {gap:e}");
    }
}

#[test]
fn block_cases_match_radial_brute_force() {
    for (k, kind) in KINDS.into_iter().enumerate() {
        let gap = worst_block_gap(kind, 1000, 200 + k as u64);
        assert!(gap <= 1e-8, "{kind:?}: {gap:e}");
    }
}

#[test]
fn operator_examples() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    assert_eq!(truncate(2.5, 2.0), 2.5);
    assert_eq!(truncate(1.5, 2.0), 0.0);
    assert_eq!(truncate(-2.0, 2.0), 0.0);
}

#[test]
fn sequential_and_parallel_agree() {
    let mut rng = rng(300);
    let v = random_matrix(&mut rng, 37, 53);
    for kind in KINDS {
        let spec = PenaltySpec::elementwise(kind, 37, 53);
        let p = ProxProblem { v: &v, gamma: 0.3, rho: 2.0, spec: &spec };
        assert_eq!(prox_with(&p, Parallelism::Sequential).unwrap(), prox_with(&p, Parallelism::Rayon).unwrap());
    }
}

fn kind_strategy() -> impl Strategy<Value = PenaltyKind> {
    prop_oneof![
        Just(PenaltyKind::WeightedL1),
        Just(PenaltyKind::Cardinality),
        Just(PenaltyKind::SumOfLogs)
    ]
}

fn spec_for(kind: PenaltyKind, blockwise: bool) -> PenaltySpec {
    if blockwise {
        let part = BlockPartition::new(vec![1, 2], vec![2, 2]).unwrap();
        PenaltySpec::new(kind, Granularity::Blockwise(part), 3, 4).unwrap()
    } else {
        PenaltySpec::elementwise(kind, 3, 4)
    }
}

fn mat(entries: &[f64]) -> Matrix {
    Matrix::from_vec(3, 4, entries.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn prox_dominates_trivial_candidates(
        kind in kind_strategy(),
        blockwise in any::<bool>(),
        v in prop::collection::vec(-5.0f64..5.0, 12),
        gamma in 1e-3f64..10.0,
        rho in 0.1f64..100.0,
    ) {
        let spec = spec_for(kind, blockwise);
        let v = mat(&v);
        let p = ProxProblem { v: &v, gamma, rho, spec: &spec };
        let g = prox(&p).unwrap();
        let phi = p.objective(&g).unwrap();
        let tol = 1e-12 * phi.abs().max(1.0);
        prop_assert!(phi <= p.objective(&v).unwrap() + tol);
        prop_assert!(phi <= p.objective(&Matrix::zeros(3, 4)).unwrap() + tol);
    }

    #[test]
    fn prox_keeps_sign_and_shrinks(
        kind in kind_strategy(),
        blockwise in any::<bool>(),
        v in prop::collection::vec(-5.0f64..5.0, 12),
        gamma in 1e-3f64..10.0,
        rho in 0.1f64..100.0,
    ) {
        let spec = spec_for(kind, blockwise);
        let v = mat(&v);
        let g = prox(&ProxProblem { v: &v, gamma, rho, spec: &spec }).unwrap();
        for (gi, vi) in g.as_slice().iter().zip(v.as_slice()) {
            prop_assert!(*gi == 0.0 || gi.signum() == vi.signum());
            prop_assert!(gi.abs() <= vi.abs());
        }
    }

    #[test]
    fn prox_is_monotone_in_gamma(
        kind in kind_strategy(),
        blockwise in any::<bool>(),
        v in prop::collection::vec(-5.0f64..5.0, 12),
        gamma in 1e-3f64..10.0,
        factor in 1.0f64..10.0,
        rho in 0.1f64..100.0,
    ) {
        let spec = spec_for(kind, blockwise);
        let v = mat(&v);
        let lo = prox(&ProxProblem { v: &v, gamma, rho, spec: &spec }).unwrap();
        let hi = prox(&ProxProblem { v: &v, gamma: gamma * factor, rho, spec: &spec }).unwrap();
        for (a, b) in lo.as_slice().iter().zip(hi.as_slice()) {
            prop_assert!(b.abs() <= a.abs() + 1e-12);
        }
    }

    #[test]
    fn weighted_l1_prox_is_nonexpansive(
        blockwise in any::<bool>(),
        v1 in prop::collection::vec(-5.0f64..5.0, 12),
        v2 in prop::collection::vec(-5.0f64..5.0, 12),
        gamma in 1e-3f64..10.0,
        rho in 0.1f64..100.0,
    ) {
        let spec = spec_for(PenaltyKind::WeightedL1, blockwise);
        let (v1, v2) = (mat(&v1), mat(&v2));
        let g1 = prox(&ProxProblem { v: &v1, gamma, rho, spec: &spec }).unwrap();
        let g2 = prox(&ProxProblem { v: &v2, gamma, rho, spec: &spec }).unwrap();
        prop_assert!((&g1 - &g2).frobenius_norm() <= (&v1 - &v2).frobenius_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn zero_gamma_is_identity(
        kind in kind_strategy(),
        blockwise in any::<bool>(),
        v in prop::collection::vec(-5.0f64..5.0, 12),
        rho in 0.1f64..100.0,
    ) {
        let spec = spec_for(kind, blockwise);
        let v = mat(&v);
        let g = prox(&ProxProblem { v: &v, gamma: 0.0, rho, spec: &spec }).unwrap();
        prop_assert_eq!(g, v);
    }
}
