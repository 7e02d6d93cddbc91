//! Closed-loop H2 objective `J(F) = trace(B1ᵀ·P·B1)` with its gradient and
//! Hessian-vector products.
//!
//! `P` and `L` are the observability and controllability Gramians of
//! `A − B2·F`:
//!
//! ```text
//! (A − B2F)ᵀP + P(A − B2F) = −(Q + FᵀRF)
//! (A − B2F)L + L(A − B2F)ᵀ = −B1·B1ᵀ
//! ∇J(F) = 2(RF − B2ᵀP)L
//! ```

use thiserror::Error;

use crate::linalg::{LinalgError, LyapunovSolver, Matrix};
use crate::model::Plant;
use crate::par::{self, Parallelism};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum H2Error {
    #[error("gain is not stabilizing (spectral abscissa {0:e})")]
    NotStabilizing(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Gramians and objective of a stabilizing gain, reused for gradient and
/// Hessian evaluations.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    plant: &'a Plant,
    gain: Matrix,
    lyap: LyapunovSolver,
    p: Matrix,
    l: Matrix,
    objective: f64,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(plant: &'a Plant, gain: &Matrix) -> Result<Self, H2Error> {
        plant
            .check_gain(gain)
            .map_err(|e| H2Error::Dimension(e.to_string()))?;
        let lyap = LyapunovSolver::new(&plant.closed_loop(gain))?;
        if !lyap.is_stable() {
            return Err(H2Error::NotStabilizing(lyap.spectral_abscissa()));
        }
        let weight = &plant.q + &gain.tr_matmul(&plant.r.matmul(gain));
        let p = lyap.solve_observability(&weight)?;
        let b1 = &plant.b1;
        let l = lyap.solve_controllability(&b1.matmul(&b1.transpose()))?;
        let objective = p.matmul(b1).dot(b1);
        Ok(ClosedLoop {
            plant,
            gain: gain.clone(),
            lyap,
            p,
            l,
            objective,
        })
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    pub fn into_gain(self) -> Matrix {
        self.gain
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Observability Gramian `P`.
    pub fn p(&self) -> &Matrix {
        &self.p
    }

    /// Controllability Gramian `L`.
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.lyap.spectral_abscissa()
    }

    /// `RF − B2ᵀP`
    fn residual_gain(&self) -> Matrix {
        &self.plant.r.matmul(&self.gain) - &self.plant.b2.tr_matmul(&self.p)
    }

    /// `∇J(F) = 2(RF − B2ᵀP)L`
    pub fn gradient(&self) -> Matrix {
        self.residual_gain().matmul(&self.l).scale(2.0)
    }

    /// `H(F, F̃) = 2((RF̃ − B2ᵀP̃)L + (RF − B2ᵀP)L̃)`.
    pub fn hessian_apply(&self, dir: &Matrix) -> Result<Matrix, H2Error> {
        self.plant
            .check_gain(dir)
            .map_err(|e| H2Error::Dimension(e.to_string()))?;
        let plant = self.plant;
        let b2_dir_l = plant.b2.matmul(dir).matmul(&self.l);
        let l_rhs = (&b2_dir_l + &b2_dir_l.transpose()).scale(-1.0);
        let l_dir = self.lyap.solve_controllability(&l_rhs)?;

        // (PB2 − FᵀR)F̃ + F̃ᵀ(B2ᵀP − RF)
        let k = self.residual_gain();
        let kt_dir = k.tr_matmul(dir);
        let p_rhs = &kt_dir + &kt_dir.transpose();
        let p_dir = self.lyap.solve_observability(&p_rhs)?;

        let first = (&plant.r.matmul(dir) - &plant.b2.tr_matmul(&p_dir)).matmul(&self.l);
        let second = k.matmul(&l_dir);
        Ok((&first + &second).scale(2.0))
    }
}

/// `J(F)`, or `+∞` when `A − B2·F` is not Hurwitz.
///
/// Panics if `F` does not match the plant dimensions.
pub fn objective(plant: &Plant, gain: &Matrix) -> f64 {
    match ClosedLoop::new(plant, gain) {
        Ok(cl) => cl.objective(),
        Err(H2Error::Dimension(msg)) => panic!("objective: {msg}"),
        Err(_) => f64::INFINITY,
    }
}

pub fn gradient(plant: &Plant, gain: &Matrix) -> Result<Matrix, H2Error> {
    Ok(ClosedLoop::new(plant, gain)?.gradient())
}

pub fn hessian_apply(plant: &Plant, gain: &Matrix, dir: &Matrix) -> Result<Matrix, H2Error> {
    ClosedLoop::new(plant, gain)?.hessian_apply(dir)
}

/// `J` for many gains at once; entries are independent.
pub fn objective_batch(plant: &Plant, gains: &[Matrix], mode: Parallelism) -> Vec<f64> {
    par::map(mode, gains, |g| objective(plant, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_plant() -> Plant {
        let one = Matrix::identity(1);
        Plant::new(one.clone(), one.clone(), one.clone(), one.clone(), one).unwrap()
    }

    fn s(v: f64) -> Matrix {
        Matrix::from_diag(&[v])
    }

    #[test]
    fn scalar_objective_closed_form() {
        let plant = scalar_plant();
        let fc = 1.0 + 2f64.sqrt();
        assert!((objective(&plant, &s(fc)) - fc).abs() < 1e-12);
        assert_eq!(objective(&plant, &s(0.5)), f64::INFINITY);
        // J(F) = (1 + F²) / (2(F − 1)) for this plant
        for f in [1.5, 2.0, 3.7] {
            let expected = (1.0 + f * f) / (2.0 * (f - 1.0));
            assert!((objective(&plant, &s(f)) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_gradient_closed_form() {
        let plant = scalar_plant();
        // d/dF (1 + F²)/(2(F − 1)) = (F² − 2F − 1) / (2(F − 1)²)
        let f = 2.0;
        let expected = (f * f - 2.0 * f - 1.0) / (2.0 * (f - 1.0) * (f - 1.0));
        let g = gradient(&plant, &s(f)).unwrap();
        assert!((g[(0, 0)] - expected).abs() < 1e-12);
        let g = gradient(&plant, &s(1.0 + 2f64.sqrt())).unwrap();
        assert!(g[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn hessian_of_zero_direction_is_zero() {
        let plant = scalar_plant();
        let h = hessian_apply(&plant, &s(2.0), &s(0.0)).unwrap();
        assert_eq!(h[(0, 0)], 0.0);
    }

    #[test]
    fn unstable_gain_errors() {
        let plant = scalar_plant();
        assert!(matches!(gradient(&plant, &s(0.0)), Err(H2Error::NotStabilizing(_))));
    }
}
