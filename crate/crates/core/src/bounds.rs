//! Probabilistic steady-state bounds.
//!
//! For a sampling distribution `p` with dominance constant `ρ` and deviation
//! `ε`, the steady-state covariance of a random selection satisfies
//! `P_L ⪯ P_𝒮 ⪯ P_U` with probability at least `1 − δ`, where `P_U` and
//! `P_L` are the steady states driven by `(1 ∓ ε)·n_s·E[Z]`. The steady state
//! driven by `n_s·E[Z]` itself, `L`, lower-bounds `E[P_𝒮]` and sits between
//! the two bounds.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::concentration::{rho_min, ConcentrationParams};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, psd_sqrt};
use crate::model::{expected_information, matrix_to_rows, SamplingDistribution, SensorPool, SystemModel};
use crate::riccati::{is_detectable, is_stabilizable, steady_state, RecursionOptions, SteadyStateResult};
use crate::scalar::Scalar;

pub use crate::linalg::psd_leq;

/// Slack allowed when comparing a requested `ρ` against `rho_min(p)`.
pub const RHO_SLACK: f64 = 1e-8;

/// `P_U`, `P_L` and `L` with the solver metadata behind each.
#[derive(Debug, Clone)]
pub struct BoundSet<T: Scalar = f64> {
    pub eps: f64,
    pub upper: SteadyStateResult<T>,
    pub lower: SteadyStateResult<T>,
    /// Analytic lower bound on `E[P_𝒮]`, identical to the `ε → 0` limit.
    pub mean_lower: SteadyStateResult<T>,
    pub params: ConcentrationParams,
}

impl<T: Scalar> BoundSet<T> {
    pub fn p_upper(&self) -> &DMatrix<T> {
        &self.upper.p
    }

    pub fn p_lower(&self) -> &DMatrix<T> {
        &self.lower.p
    }

    pub fn l(&self) -> &DMatrix<T> {
        &self.mean_lower.p
    }

    pub fn lambda_max_upper(&self) -> T {
        max_eigenvalue(&self.upper.p)
    }

    pub fn lambda_max_lower(&self) -> T {
        max_eigenvalue(&self.lower.p)
    }

    pub fn report(&self) -> BoundReport {
        BoundReport {
            n_s: self.params.n_s,
            m: self.params.m,
            delta: self.params.delta,
            rho: self.params.rho,
            eps: self.eps,
            p_upper: matrix_to_rows(&self.upper.p),
            p_lower: matrix_to_rows(&self.lower.p),
            l: matrix_to_rows(&self.mean_lower.p),
            lambda_max_upper: self.lambda_max_upper().as_f64(),
            lambda_max_lower: self.lambda_max_lower().as_f64(),
            lambda_max_l: max_eigenvalue(&self.mean_lower.p).as_f64(),
            iterations: [self.upper.iterations, self.lower.iterations, self.mean_lower.iterations],
        }
    }
}

/// JSON view of a [`BoundSet`].
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n_s: usize,
    pub m: usize,
    pub delta: f64,
    pub rho: f64,
    pub eps: f64,
    #[serde(rename = "P_U")]
    pub p_upper: Vec<Vec<f64>>,
    #[serde(rename = "P_L")]
    pub p_lower: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub lambda_max_upper: f64,
    pub lambda_max_lower: f64,
    pub lambda_max_l: f64,
    /// Riccati iterations for `P_U`, `P_L`, `L`.
    pub iterations: [usize; 3],
}

fn check_detectability<T: Scalar>(model: &SystemModel<T>, e: &DMatrix<T>) -> Result<()> {
    if !is_stabilizable(model.a(), &psd_sqrt(model.q())) {
        return Err(Error::Unstabilizable);
    }
    if !is_detectable(model.a(), &psd_sqrt(e)) {
        return Err(Error::Undetectable);
    }
    Ok(())
}

fn solve_scaled<T: Scalar>(model: &SystemModel<T>, e: &DMatrix<T>, scale: f64) -> Result<SteadyStateResult<T>> {
    steady_state(model, &(e * T::of(scale)), &RecursionOptions::default())
}

/// Steady states for `(1 − ε)·n_s·E[Z]` and `(1 + ε)·n_s·E[Z]` at an explicit
/// `ε ∈ [0, 1)`, skipping the dominance-constant hypothesis. Returns
/// `(P_U, P_L)`.
pub fn bounds_for_epsilon<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    p: &SamplingDistribution<T>,
    n_s: usize,
    eps: f64,
) -> Result<(SteadyStateResult<T>, SteadyStateResult<T>)> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Invalid(format!("eps must lie in [0, 1), got {eps}")));
    }
    if n_s == 0 {
        return Err(Error::Invalid("n_s must be at least 1".into()));
    }
    pool.check_model(model)?;
    let e = expected_information(pool, p)?;
    check_detectability(model, &e)?;
    let n = n_s as f64;
    Ok((solve_scaled(model, &e, (1.0 - eps) * n)?, solve_scaled(model, &e, (1.0 + eps) * n)?))
}

/// Steady state driven by `n_s·E[Z]`: a lower bound on `E[P_𝒮]`.
pub fn analytic_lower_bound<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    p: &SamplingDistribution<T>,
    n_s: usize,
) -> Result<SteadyStateResult<T>> {
    if n_s == 0 {
        return Err(Error::Invalid("n_s must be at least 1".into()));
    }
    pool.check_model(model)?;
    let e = expected_information(pool, p)?;
    check_detectability(model, &e)?;
    solve_scaled(model, &e, n_s as f64)
}

/// Full bound set at `(p, n_s, δ, ρ)`; every hypothesis is checked and a
/// failure names the one that does not hold.
pub fn bound_pair<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    p: &SamplingDistribution<T>,
    n_s: usize,
    delta: f64,
    rho: f64,
) -> Result<BoundSet<T>> {
    pool.check_model(model)?;
    let params = ConcentrationParams::new(n_s, model.order(), delta, rho)?;
    let needed = rho_min(pool, p)?.as_f64();
    if needed > rho + RHO_SLACK {
        return Err(Error::RhoInfeasible { rho, rho_min: needed });
    }
    let (upper, lower) = bounds_for_epsilon(model, pool, p, n_s, params.epsilon)?;
    let mean_lower = analytic_lower_bound(model, pool, p, n_s)?;
    Ok(BoundSet {
        eps: params.epsilon,
        upper,
        lower,
        mean_lower,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{loewner_leq, relative_frobenius};
    use crate::model::{generate_synthetic_pool, CandidateSensor};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn scalar_setup(a: f64, q: f64, c: f64) -> (SystemModel, SensorPool, SamplingDistribution) {
        let model = SystemModel::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, q)).unwrap();
        let pool = SensorPool::new(vec![CandidateSensor::new(DVector::from_element(1, c), 1.0).unwrap()]).unwrap();
        let p = SamplingDistribution::new(DVector::from_element(1, 1.0)).unwrap();
        (model, pool, p)
    }

    #[test]
    fn scalar_closed_form() {
        let (model, pool, p) = scalar_setup(0.0, 1.0, 1.0);
        // n_s chosen so that eps is close to 0.5 for m = 1, δ = 0.1
        let delta = 0.1;
        let n_s = (16.0 * (20f64).ln()).ceil() as usize;
        let eps = crate::concentration::epsilon(1.0, n_s, 1, delta).unwrap();
        let b = bound_pair(&model, &pool, &p, n_s, delta, 1.0).unwrap();
        let n = n_s as f64;
        assert_relative_eq!(b.p_upper()[(0, 0)], 1.0 / (1.0 + (1.0 - eps) * n), epsilon = 1e-12);
        assert_relative_eq!(b.p_lower()[(0, 0)], 1.0 / (1.0 + (1.0 + eps) * n), epsilon = 1e-12);
        assert_relative_eq!(b.l()[(0, 0)], 1.0 / (1.0 + n), epsilon = 1e-12);

        let (up, lo) = bounds_for_epsilon(&model, &pool, &p, 10, 0.5).unwrap();
        assert_relative_eq!(up.p[(0, 0)], 1.0 / (1.0 + 0.5 * 10.0), epsilon = 1e-12);
        assert_relative_eq!(lo.p[(0, 0)], 1.0 / (1.0 + 1.5 * 10.0), epsilon = 1e-12);
    }

    #[test]
    fn analytic_lower_bound_closed_form() {
        let (model, pool, p) = scalar_setup(0.0, 2.0, 0.5);
        let l = analytic_lower_bound(&model, &pool, &p, 8).unwrap();
        // q / (1 + q n_s z) with z = 0.25
        assert_relative_eq!(l.p[(0, 0)], 2.0 / (1.0 + 2.0 * 8.0 * 0.25), epsilon = 1e-12);
        assert!(analytic_lower_bound(&model, &pool, &p, 0).is_err());
    }

    #[test]
    fn epsilon_zero_collapses_onto_l() {
        let (model, pool) = generate_synthetic_pool::<f64>(3, 12, 0.5, 0.5, 4).unwrap();
        let p = SamplingDistribution::new(DVector::from_element(12, 1.0 / 12.0)).unwrap();
        let (up, lo) = bounds_for_epsilon(&model, &pool, &p, 40, 0.0).unwrap();
        let l = analytic_lower_bound(&model, &pool, &p, 40).unwrap();
        assert!(relative_frobenius(&up.p, &l.p) <= 1e-8);
        assert!(relative_frobenius(&lo.p, &l.p) <= 1e-8);
    }

    #[test]
    fn vanishing_epsilon_limit() {
        let (model, pool, p) = scalar_setup(0.9, 1.0, 1.0);
        let n_s = 1_000_000_000_000_000_000usize;
        let b = bound_pair(&model, &pool, &p, n_s, 0.1, 1.0).unwrap();
        assert!(b.eps < 1e-8);
        assert!(relative_frobenius(b.p_upper(), b.l()) <= 1e-8);
        assert!(relative_frobenius(b.p_lower(), b.l()) <= 1e-8);
    }

    #[test]
    fn sandwich_and_eigenvalue_order() {
        let (model, pool) = generate_synthetic_pool::<f64>(3, 30, 0.5, 0.5, 8).unwrap();
        let p = SamplingDistribution::new(DVector::from_element(30, 1.0 / 30.0)).unwrap();
        let rho = rho_min(&pool, &p).unwrap();
        let n_s = 2000;
        let b = bound_pair(&model, &pool, &p, n_s, 0.1, rho).unwrap();
        assert!(loewner_leq(b.p_lower(), b.l()));
        assert!(loewner_leq(b.l(), b.p_upper()));
        assert!(b.lambda_max_lower() <= b.lambda_max_upper());
        let report = b.report();
        assert_eq!(report.p_upper.len(), 3);
        assert!(serde_json::to_string(&report).unwrap().contains("\"P_U\""));
    }

    #[test]
    fn hypothesis_failures_are_named() {
        let (model, pool) = generate_synthetic_pool::<f64>(3, 30, 0.5, 0.5, 8).unwrap();
        let p = SamplingDistribution::new(DVector::from_element(30, 1.0 / 30.0)).unwrap();
        assert!(matches!(
            bound_pair(&model, &pool, &p, 10, 0.1, 1.0),
            Err(Error::EpsilonInfeasible { .. })
        ));
        assert!(matches!(
            bound_pair(&model, &pool, &p, 5000, 0.1, 1.0),
            Err(Error::RhoInfeasible { .. })
        ));

        // unstable mode invisible to every sensor
        let a = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.5, 0.2]));
        let m = SystemModel::new(a, DMatrix::identity(2, 2)).unwrap();
        let blind = SensorPool::new(vec![CandidateSensor::new(DVector::from_row_slice(&[0.0, 1.0]), 1.0).unwrap()])
            .unwrap();
        let one = SamplingDistribution::new(DVector::from_element(1, 1.0)).unwrap();
        assert!(matches!(
            bound_pair(&m, &blind, &one, 1000, 0.1, 1.0),
            Err(Error::Undetectable)
        ));
    }
}
