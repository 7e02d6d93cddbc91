//! Benchmark plants: a mass-spring chain, a random network of unstable
//! nodes, and a ring of five reaction subsystems with block structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::model::{BlockPartition, ModelError, Plant};

/// `N` unit masses joined by unit springs, states `[positions; velocities]`.
///
/// `A = [[0, I], [T, 0]]` with `T = tridiag(1, −2, 1)`, `B1 = B2 = [0; I]`,
/// `Q = I` and `R = r_scale·I`.
pub fn mass_spring(n_masses: usize, r_scale: f64) -> Result<Plant, ModelError> {
    if n_masses == 0 {
        return Err(ModelError::Dimension("mass-spring chain needs at least one mass".into()));
    }
    let n = n_masses;
    let mut a = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(n + i, i)] = -2.0;
        if i + 1 < n {
            a[(n + i, i + 1)] = 1.0;
            a[(n + i + 1, i)] = 1.0;
        }
    }
    let b = Matrix::from_fn(2 * n, n, |i, j| if i == n + j { 1.0 } else { 0.0 });
    Plant::new(a, b.clone(), b, Matrix::identity(2 * n), Matrix::identity(n).scale(r_scale))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub plant: Plant,
    pub positions: Vec<[f64; 2]>,
    pub seed: u64,
}

/// `N` nodes placed uniformly in a `side × side` square, each with local
/// dynamics `[[1, 1], [1, 2]]` and coupled to every other node through
/// `exp(−distance)·I₂`. Each node has one actuator on its second state.
///
/// Positions come from ChaCha8 seeded with `seed`, so the plant is
/// reproducible on every platform.
pub fn random_network(n_nodes: usize, side: f64, seed: u64) -> Result<Network, ModelError> {
    if n_nodes == 0 {
        return Err(ModelError::Dimension("network needs at least one node".into()));
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(ModelError::Invalid(format!("square side must be positive, got {side}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<[f64; 2]> = (0..n_nodes)
        .map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)])
        .collect();
    let n = n_nodes;
    let mut a = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let r = 2 * i;
        a[(r, r)] = 1.0;
        a[(r, r + 1)] = 1.0;
        a[(r + 1, r)] = 1.0;
        a[(r + 1, r + 1)] = 2.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let [xi, yi] = positions[i];
            let [xj, yj] = positions[j];
            let w = (-(xi - xj).hypot(yi - yj)).exp();
            a[(r, 2 * j)] = w;
            a[(r + 1, 2 * j + 1)] = w;
        }
    }
    let b = Matrix::from_fn(2 * n, n, |i, j| if i == 2 * j + 1 { 1.0 } else { 0.0 });
    let plant = Plant::new(a, b.clone(), b, Matrix::identity(2 * n), Matrix::identity(n))?;
    Ok(Network { plant, positions, seed })
}

/// Number of subsystems in [`biochemical`].
pub const BIOCHEM_SUBSYSTEMS: usize = 5;

/// Five three-state subsystems with cyclic negative feedback, coupled by
/// `−½·Σ_j (i − j)(x_i − x_j)`, one actuator per subsystem.
///
/// Returns the plant and the 5×5 partition of the 5×15 gain into 1×3 blocks.
pub fn biochemical() -> (Plant, BlockPartition) {
    let n_sub = BIOCHEM_SUBSYSTEMS;
    let local = [[-1.0, 0.0, -3.0], [3.0, -1.0, 0.0], [0.0, 3.0, -1.0]];
    let n = 3 * n_sub;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n_sub {
        let shift: f64 = (0..n_sub).map(|j| 0.5 * (i as f64 - j as f64)).sum();
        for r in 0..3 {
            for c in 0..3 {
                a[(3 * i + r, 3 * i + c)] = local[r][c];
            }
            a[(3 * i + r, 3 * i + r)] -= shift;
            for j in (0..n_sub).filter(|&j| j != i) {
                a[(3 * i + r, 3 * j + r)] = 0.5 * (i as f64 - j as f64);
            }
        }
    }
    let b1 = Matrix::identity(n).scale(3.0);
    let b2 = Matrix::from_fn(n, n_sub, |i, j| if i == 3 * j { 3.0 } else { 0.0 });
    let plant = Plant::new(a, b1, b2, Matrix::identity(n), Matrix::identity(n_sub))
        .expect("biochemical plant is well formed");
    let part = BlockPartition::uniform(n_sub, n, 1, 3).expect("uniform partition");
    (plant, part)
}
