//! γ-homotopy: sweep the sparsity weight upward from the centralized gain,
//! warm-starting ADMM at every step, then polish each identified structure.
//!
//! The sweep itself is sequential. Polishing runs afterwards, one independent
//! job per γ, so it can fan out across threads without changing results.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{admm_solve_from, critical_point_certificate, AdmmError, AdmmOptions, AdmmState, AdmmStatus, Certificate};
use crate::h2::objective;
use crate::linalg::{solve_are, Matrix};
use crate::model::{cardinality_report, Granularity, ModelError, PenaltyKind, PenaltySpec, Plant, StructureMask};
use crate::par::{self, Parallelism};
use crate::polish::{polish_gain, PolishOptions, PolishStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("no centralized controller: {0}")]
    Synthesis(String),
    #[error("invalid path options: {0}")]
    Options(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("at gamma = {gamma}: {source}")]
    Admm { gamma: f64, source: AdmmError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    /// Strictly increasing, positive.
    pub gamma_grid: Vec<f64>,
    /// Only affects weighted ℓ1 penalties.
    pub reweighting: bool,
    pub reweight_eps: f64,
    pub polish: PolishOptions,
    pub parallelism: Parallelism,
}

impl PathOptions {
    pub fn new(gamma_grid: Vec<f64>) -> Self {
        PathOptions {
            gamma_grid,
            reweighting: true,
            reweight_eps: crate::model::DEFAULT_EPSILON_REWEIGHT,
            polish: PolishOptions::default(),
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PathError> {
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(PathError::Options(format!("gamma values must be positive and finite, got {g}")));
        }
        if self.gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PathError::Options("gamma grid must be strictly increasing".into()));
        }
        if !(self.reweight_eps > 0.0) {
            return Err(PathError::Options("reweighting epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// `steps` logarithmically spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![max],
        _ => {
            let (a, b) = (min.ln(), max.ln());
            (0..steps)
                .map(|k| {
                    if k + 1 == steps {
                        max
                    } else {
                        (a + (b - a) * k as f64 / (steps - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    /// The γ = 0 base point from the Riccati equation.
    Centralized,
    Converged,
    NotConverged,
    Stalled,
}

impl From<AdmmStatus> for RecordStatus {
    fn from(s: AdmmStatus) -> Self {
        match s {
            AdmmStatus::Converged => RecordStatus::Converged,
            AdmmStatus::NotConverged => RecordStatus::NotConverged,
            AdmmStatus::Stalled => RecordStatus::Stalled,
        }
    }
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Centralized => "centralized",
            RecordStatus::Converged => "converged",
            RecordStatus::NotConverged => "not-converged",
            RecordStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum PolishReport {
    Done { status: PolishStatus, iterations: usize },
    /// The identified gain was not stabilizing, so there was nothing to polish.
    Skipped { reason: String },
}

/// One point of the trade-off curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRecord {
    pub gamma: f64,
    pub status: RecordStatus,
    pub admm_iters: usize,
    pub am_iters: usize,
    pub nnz: usize,
    pub nnz_blocks: usize,
    pub zero_tol: f64,
    pub mask: StructureMask,
    pub f_identified: Matrix,
    /// `+∞` (serialised as `null`) when the identified gain is not stabilizing.
    pub j_identified: f64,
    pub f_polished: Matrix,
    pub j_polished: f64,
    pub polish: PolishReport,
    pub certificate: Option<Certificate>,
}

impl GammaRecord {
    pub fn is_stabilizing(&self) -> bool {
        self.j_identified.is_finite() && self.j_polished.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub f_centralized: Matrix,
    pub j_centralized: f64,
    pub nnz_centralized: usize,
    pub records: Vec<GammaRecord>,
}

impl PathResult {
    /// `nnz / (m·n)`, the fraction of entries a dense gain would use.
    pub fn nnz_ratio(&self, rec: &GammaRecord) -> f64 {
        let (m, n) = self.f_centralized.shape();
        rec.nnz as f64 / (m * n).max(1) as f64
    }

    /// `100·(J_polished − J_c)/J_c`
    pub fn dj_percent(&self, rec: &GammaRecord) -> f64 {
        100.0 * (rec.j_polished - self.j_centralized) / self.j_centralized
    }

    /// Record whose γ is closest to `gamma` on a log scale.
    pub fn nearest(&self, gamma: f64) -> Option<&GammaRecord> {
        self.records
            .iter()
            .filter(|r| r.gamma > 0.0)
            .min_by(|a, b| {
                let da = (a.gamma.ln() - gamma.ln()).abs();
                let db = (b.gamma.ln() - gamma.ln()).abs();
                da.total_cmp(&db)
            })
    }
}

/// Weights `1/(|F_ij| + ε)`, or `1/(‖F_b‖_F + ε)` per block.
pub fn update_weights(prev: &Matrix, spec: &PenaltySpec, eps: f64) -> Result<PenaltySpec, ModelError> {
    let mags = match &spec.granularity {
        Granularity::Elementwise => prev.map(f64::abs),
        Granularity::Blockwise(part) => {
            part.check(prev.rows(), prev.cols())?;
            part.block_norms(prev)
        }
    };
    spec.clone().with_weights(mags.map(|t| 1.0 / (t + eps)))
}

struct Identified {
    gamma: f64,
    status: RecordStatus,
    admm_iters: usize,
    am_iters: usize,
    nnz: usize,
    nnz_blocks: usize,
    zero_tol: f64,
    mask: StructureMask,
    gain: Matrix,
    objective: f64,
    certificate: Option<Certificate>,
}

/// Progress notifications from [`run_path_observed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathEvent {
    Centralized { objective: f64, nnz: usize },
    Identified { index: usize, gamma: f64, nnz: usize, objective: f64, admm_iters: usize, status: RecordStatus },
    Polishing { records: usize },
}

/// Runs the homotopy over `popts.gamma_grid`. Record 0 is the centralized
/// gain; the others follow the grid in order.
pub fn run_path(
    plant: &Plant,
    spec: &PenaltySpec,
    popts: &PathOptions,
    aopts: &AdmmOptions,
) -> Result<PathResult, PathError> {
    run_path_observed(plant, spec, popts, aopts, &mut |_| {})
}

pub fn run_path_observed(
    plant: &Plant,
    spec: &PenaltySpec,
    popts: &PathOptions,
    aopts: &AdmmOptions,
    observer: &mut dyn FnMut(PathEvent),
) -> Result<PathResult, PathError> {
    popts.validate()?;
    spec.check(plant.m(), plant.n())?;
    let (_, fc) = solve_are(plant).map_err(|e| PathError::Synthesis(e.to_string()))?;
    let jc = objective(plant, &fc);
    if !jc.is_finite() {
        return Err(PathError::Synthesis("Riccati gain is not stabilizing".into()));
    }
    let base = cardinality_report(&fc, &spec.granularity)?;
    observer(PathEvent::Centralized { objective: jc, nnz: base.nnz });

    let reweight = popts.reweighting && spec.kind == PenaltyKind::WeightedL1;
    let mut spec = spec.clone();
    let mut state = AdmmState::new(&fc);
    let mut prev = fc.clone();
    let mut identified = Vec::with_capacity(popts.gamma_grid.len());
    for &gamma in &popts.gamma_grid {
        if reweight {
            spec = update_weights(&prev, &spec, popts.reweight_eps)?;
        }
        let out = admm_solve_from(plant, gamma, &spec, state, aopts)
            .map_err(|source| PathError::Admm { gamma, source })?;
        let report = cardinality_report(&out.state.g, &spec.granularity)?;
        let mut gain = report.mask.apply(&out.state.g);
        let mut j = objective(plant, &gain);
        if !j.is_finite() {
            let fallback = report.mask.apply(&out.state.f);
            let jf = objective(plant, &fallback);
            if jf.is_finite() {
                gain = fallback;
                j = jf;
            }
        }
        let certificate = critical_point_certificate(plant, &out.state, gamma, &spec).ok();
        prev = gain.clone();
        observer(PathEvent::Identified {
            index: identified.len() + 1,
            gamma,
            nnz: report.nnz,
            objective: j,
            admm_iters: out.state.iter,
            status: out.status.into(),
        });
        identified.push(Identified {
            gamma,
            status: out.status.into(),
            admm_iters: out.state.iter,
            am_iters: out.am_iterations,
            nnz: report.nnz,
            nnz_blocks: report.nnz_blocks,
            zero_tol: report.zero_tol,
            mask: report.mask,
            gain,
            objective: j,
            certificate,
        });
        state = out.state;
    }

    let popts_polish = popts.polish;
    let mut records = vec![GammaRecord {
        gamma: 0.0,
        status: RecordStatus::Centralized,
        admm_iters: 0,
        am_iters: 0,
        nnz: base.nnz,
        nnz_blocks: base.nnz_blocks,
        zero_tol: base.zero_tol,
        mask: base.mask,
        f_identified: fc.clone(),
        j_identified: jc,
        f_polished: fc.clone(),
        j_polished: jc,
        polish: PolishReport::Done { status: PolishStatus::Converged, iterations: 0 },
        certificate: None,
    }];
    observer(PathEvent::Polishing { records: identified.len() });
    let polished = par::map(popts.parallelism, &identified, |id| {
        if !id.objective.is_finite() {
            return (
                id.gain.clone(),
                id.objective,
                PolishReport::Skipped { reason: "identified gain is not stabilizing".into() },
            );
        }
        match polish_gain(plant, &id.mask, &id.gain, &popts_polish) {
            Ok(out) => (
                out.gain,
                out.objective,
                PolishReport::Done { status: out.status, iterations: out.iterations },
            ),
            Err(e) => (id.gain.clone(), id.objective, PolishReport::Skipped { reason: e.to_string() }),
        }
    });
    for (id, (f_polished, j_polished, polish)) in identified.into_iter().zip(polished) {
        records.push(GammaRecord {
            gamma: id.gamma,
            status: id.status,
            admm_iters: id.admm_iters,
            am_iters: id.am_iters,
            nnz: id.nnz,
            nnz_blocks: id.nnz_blocks,
            zero_tol: id.zero_tol,
            mask: id.mask,
            f_identified: id.gain,
            j_identified: id.objective,
            f_polished,
            j_polished,
            polish,
            certificate: id.certificate,
        });
    }
    Ok(PathResult {
        f_centralized: fc,
        j_centralized: jc,
        nnz_centralized: base.nnz,
        records,
    })
}
