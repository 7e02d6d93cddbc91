//! Problem definition: plant data, block partitions, penalties and masks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix, SymmetricEigen};

/// State-feedback gain `F` (`m x n`, `u = −F·x`). Also used for the `G`,
/// `Λ`, `U` and `V` iterates.
pub type GainMatrix = Matrix;

/// Default sum-of-logs ε used when evaluating or shrinking with that penalty.
pub const DEFAULT_EPSILON_LOG: f64 = 1e-1;
/// Default ε in the reweighting rule `W = 1/(|F| + ε)`.
pub const DEFAULT_EPSILON_REWEIGHT: f64 = 1e-3;
/// Relative threshold for declaring an entry structurally zero.
pub const ZERO_TOL_REL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `ẋ = A·x + B1·d + B2·u` with performance weights `Q ⪰ 0`, `R ≻ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub a: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

impl Plant {
    pub fn new(a: Matrix, b1: Matrix, b2: Matrix, q: Matrix, r: Matrix) -> Result<Self, ModelError> {
        let n = a.rows();
        let check = |name: &str, m: &Matrix, rows: usize, cols: Option<usize>| {
            if m.rows() != rows || cols.is_some_and(|c| m.cols() != c) {
                Err(ModelError::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{}",
                    m.rows(),
                    m.cols(),
                    cols.map_or("*".to_string(), |c| c.to_string())
                )))
            } else {
                Ok(())
            }
        };
        check("A", &a, n, Some(n))?;
        check("B1", &b1, n, None)?;
        check("B2", &b2, n, None)?;
        check("Q", &q, n, Some(n))?;
        let m = b2.cols();
        check("R", &r, m, Some(m))?;
        for (name, mat) in [("A", &a), ("B1", &b1), ("B2", &b2), ("Q", &q), ("R", &r)] {
            if !mat.is_finite() {
                return Err(ModelError::Invalid(format!("{name} has non-finite entries")));
            }
        }
        if !q.is_symmetric(1e-10) {
            return Err(ModelError::Invalid("Q is not symmetric".into()));
        }
        if !r.is_symmetric(1e-10) {
            return Err(ModelError::Invalid("R is not symmetric".into()));
        }
        let q_min = SymmetricEigen::new(&q)?.min_value();
        if n > 0 && q_min < -1e-10 * q.max_abs().max(1.0) {
            return Err(ModelError::Invalid(format!(
                "Q is not positive semidefinite (smallest eigenvalue {q_min:e})"
            )));
        }
        let r_min = SymmetricEigen::new(&r)?.min_value();
        if m > 0 && r_min <= 1e-10 * r.max_abs().max(1.0) {
            return Err(ModelError::Invalid(format!(
                "R is not positive definite (smallest eigenvalue {r_min:e})"
            )));
        }
        Ok(Plant { a, b1, b2, q, r })
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Number of control inputs.
    pub fn m(&self) -> usize {
        self.b2.cols()
    }

    /// Number of disturbance inputs.
    pub fn d(&self) -> usize {
        self.b1.cols()
    }

    /// `A − B2·F`
    pub fn closed_loop(&self, gain: &Matrix) -> Matrix {
        &self.a - &self.b2.matmul(gain)
    }

    pub fn check_gain(&self, gain: &Matrix) -> Result<(), ModelError> {
        if gain.shape() != (self.m(), self.n()) {
            return Err(ModelError::Dimension(format!(
                "gain is {}x{}, plant needs {}x{}",
                gain.rows(),
                gain.cols(),
                self.m(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// Partition of an `m x n` gain into blocks `F_ij` of size `row_sizes[i] x col_sizes[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub row_sizes: Vec<usize>,
    pub col_sizes: Vec<usize>,
}

/// One block of a partition, located in gain coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub bi: usize,
    pub bj: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl BlockPartition {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Result<Self, ModelError> {
        if row_sizes.is_empty() || col_sizes.is_empty() {
            return Err(ModelError::Invalid("partition needs at least one block".into()));
        }
        if row_sizes.iter().chain(&col_sizes).any(|&s| s == 0) {
            return Err(ModelError::Invalid("block sizes must be positive".into()));
        }
        Ok(BlockPartition { row_sizes, col_sizes })
    }

    /// Equal blocks of `bh x bw` covering an `m x n` gain.
    pub fn uniform(m: usize, n: usize, bh: usize, bw: usize) -> Result<Self, ModelError> {
        if bh == 0 || bw == 0 || m % bh != 0 || n % bw != 0 {
            return Err(ModelError::Dimension(format!(
                "{bh}x{bw} blocks do not tile a {m}x{n} gain"
            )));
        }
        BlockPartition::new(vec![bh; m / bh], vec![bw; n / bw])
    }

    pub fn total_rows(&self) -> usize {
        self.row_sizes.iter().sum()
    }

    pub fn total_cols(&self) -> usize {
        self.col_sizes.iter().sum()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.row_sizes.len(), self.col_sizes.len())
    }

    pub fn check(&self, m: usize, n: usize) -> Result<(), ModelError> {
        if self.total_rows() != m || self.total_cols() != n {
            return Err(ModelError::Dimension(format!(
                "partition covers {}x{}, gain is {m}x{n}",
                self.total_rows(),
                self.total_cols()
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::with_capacity(self.row_sizes.len() * self.col_sizes.len());
        let mut row0 = 0;
        for (bi, &rows) in self.row_sizes.iter().enumerate() {
            let mut col0 = 0;
            for (bj, &cols) in self.col_sizes.iter().enumerate() {
                out.push(Block { bi, bj, row0, col0, rows, cols });
                col0 += cols;
            }
            row0 += rows;
        }
        out
    }

    pub fn block_norm(&self, f: &Matrix, b: &Block) -> f64 {
        let mut s = 0.0;
        for i in b.row0..b.row0 + b.rows {
            for v in &f.row(i)[b.col0..b.col0 + b.cols] {
                s += v * v;
            }
        }
        s.sqrt()
    }

    /// Frobenius norm of every block, on the `grid()` layout.
    pub fn block_norms(&self, f: &Matrix) -> Matrix {
        let (gr, gc) = self.grid();
        let mut out = Matrix::zeros(gr, gc);
        for b in self.blocks() {
            out[(b.bi, b.bj)] = self.block_norm(f, &b);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    WeightedL1,
    Cardinality,
    SumOfLogs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Elementwise,
    Blockwise(BlockPartition),
}

/// Sparsity-promoting penalty `g`.
///
/// Weights apply to the weighted ℓ1 kind only; they are laid out per entry
/// (elementwise) or on the block grid (blockwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub granularity: Granularity,
    pub weights: Matrix,
    pub epsilon_log: f64,
    pub epsilon_reweight: f64,
}

impl PenaltySpec {
    /// Unit weights and default ε values for an `m x n` gain.
    pub fn new(kind: PenaltyKind, granularity: Granularity, m: usize, n: usize) -> Result<Self, ModelError> {
        let shape = match &granularity {
            Granularity::Elementwise => (m, n),
            Granularity::Blockwise(p) => {
                p.check(m, n)?;
                p.grid()
            }
        };
        Ok(PenaltySpec {
            kind,
            granularity,
            weights: Matrix::filled(shape.0, shape.1, 1.0),
            epsilon_log: DEFAULT_EPSILON_LOG,
            epsilon_reweight: DEFAULT_EPSILON_REWEIGHT,
        })
    }

    pub fn elementwise(kind: PenaltyKind, m: usize, n: usize) -> Self {
        PenaltySpec::new(kind, Granularity::Elementwise, m, n).expect("elementwise spec is always valid")
    }

    pub fn with_weights(mut self, weights: Matrix) -> Result<Self, ModelError> {
        if weights.shape() != self.weights.shape() {
            return Err(ModelError::Dimension(format!(
                "weights are {}x{}, expected {}x{}",
                weights.rows(),
                weights.cols(),
                self.weights.rows(),
                self.weights.cols()
            )));
        }
        if weights.as_slice().iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(ModelError::Invalid("weights must be finite and nonnegative".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Validates the spec against an `m x n` gain.
    pub fn check(&self, m: usize, n: usize) -> Result<(), ModelError> {
        let expected = match &self.granularity {
            Granularity::Elementwise => (m, n),
            Granularity::Blockwise(p) => {
                p.check(m, n)?;
                p.grid()
            }
        };
        if self.weights.shape() != expected {
            return Err(ModelError::Dimension(format!(
                "weights are {}x{}, expected {}x{}",
                self.weights.rows(),
                self.weights.cols(),
                expected.0,
                expected.1
            )));
        }
        if !(self.epsilon_log > 0.0) || !(self.epsilon_reweight > 0.0) {
            return Err(ModelError::Invalid("ε parameters must be positive".into()));
        }
        Ok(())
    }

    /// Penalty of one scalar magnitude (entry modulus or block norm) with weight `w`.
    pub fn scalar_penalty(&self, t: f64, w: f64) -> f64 {
        match self.kind {
            PenaltyKind::WeightedL1 => w * t,
            PenaltyKind::Cardinality => {
                if t != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PenaltyKind::SumOfLogs => (t / self.epsilon_log).ln_1p(),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match (&self.kind, &self.granularity) {
            (PenaltyKind::WeightedL1, Granularity::Elementwise) => "wl1",
            (PenaltyKind::Cardinality, Granularity::Elementwise) => "card",
            (PenaltyKind::SumOfLogs, Granularity::Elementwise) => "slog",
            (PenaltyKind::WeightedL1, Granularity::Blockwise(_)) => "blk-wl1",
            (PenaltyKind::Cardinality, Granularity::Blockwise(_)) => "blk-card",
            (PenaltyKind::SumOfLogs, Granularity::Blockwise(_)) => "blk-slog",
        }
    }
}

/// `g(F)` for the given penalty.
pub fn penalty_value(f: &Matrix, spec: &PenaltySpec) -> Result<f64, ModelError> {
    spec.check(f.rows(), f.cols())?;
    let total = match &spec.granularity {
        Granularity::Elementwise => f
            .as_slice()
            .iter()
            .zip(spec.weights.as_slice())
            .map(|(&v, &w)| spec.scalar_penalty(v.abs(), w))
            .sum(),
        Granularity::Blockwise(p) => p
            .blocks()
            .iter()
            .map(|b| spec.scalar_penalty(p.block_norm(f, b), spec.weights[(b.bi, b.bj)]))
            .sum(),
    };
    Ok(total)
}

/// Binary structural identity: `true` marks a free entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureMask {
    rows: usize,
    cols: usize,
    free: Vec<bool>,
}

impl StructureMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        StructureMask {
            rows,
            cols,
            free: vec![true; rows * cols],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        StructureMask {
            rows,
            cols,
            free: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut free = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                free.push(f(i, j));
            }
        }
        StructureMask { rows, cols, free }
    }

    /// Entries with `|F_ij| > tol` become free.
    pub fn support(f: &Matrix, tol: f64) -> Self {
        StructureMask::from_fn(f.rows(), f.cols(), |i, j| f[(i, j)].abs() > tol)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.free[i * self.cols + j]
    }

    pub fn count(&self) -> usize {
        self.free.iter().filter(|&&b| b).count()
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.free
    }

    /// 0/1 matrix form of the mask.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| if self.is_free(i, j) { 1.0 } else { 0.0 })
    }

    /// `F ∘ I_S`
    pub fn apply(&self, f: &Matrix) -> Matrix {
        assert_eq!(f.shape(), self.shape(), "mask shape mismatch");
        let data = f
            .as_slice()
            .iter()
            .zip(&self.free)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("shape preserved")
    }

    /// `F ∘ I_S = F` exactly.
    pub fn contains(&self, f: &Matrix) -> bool {
        f.shape() == self.shape()
            && f.as_slice().iter().zip(&self.free).all(|(&v, &keep)| keep || v == 0.0)
    }

    pub fn is_subset_of(&self, other: &StructureMask) -> bool {
        self.shape() == other.shape() && self.free.iter().zip(&other.free).all(|(&a, &b)| !a || b)
    }
}

/// Structural-zero threshold for a gain: `ZERO_TOL_REL · max(1, max|F_ij|)`.
pub fn zero_tol(f: &Matrix) -> f64 {
    ZERO_TOL_REL * f.max_abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityReport {
    pub nnz: usize,
    pub nnz_blocks: usize,
    pub mask: StructureMask,
    pub zero_tol: f64,
}

/// Counts nonzero entries and blocks using the default zero threshold.
pub fn cardinality_report(f: &Matrix, granularity: &Granularity) -> Result<CardinalityReport, ModelError> {
    cardinality_report_with_tol(f, granularity, zero_tol(f))
}

pub fn cardinality_report_with_tol(
    f: &Matrix,
    granularity: &Granularity,
    tol: f64,
) -> Result<CardinalityReport, ModelError> {
    let mask = StructureMask::support(f, tol);
    let nnz = mask.count();
    let nnz_blocks = match granularity {
        Granularity::Elementwise => nnz,
        Granularity::Blockwise(p) => {
            p.check(f.rows(), f.cols())?;
            p.blocks().iter().filter(|b| p.block_norm(f, b) > tol).count()
        }
    };
    Ok(CardinalityReport {
        nnz,
        nnz_blocks,
        mask,
        zero_tol: tol,
    })
}
