//! Matrix concentration for sums of sampled information matrices.
//!
//! For `n_s` i.i.d. draws from `p`, the sum `Σ Z_j` lies inside the band
//! `(1 ± ε)·n_s·E[Z]` with probability at least `1 − 2m·exp(−ε² n_s / 4ρ)`
//! whenever every `𝒵_j ⪯ ρ·E[Z]`. Solving for the failure probability `δ`
//! gives `ε = √((4ρ/n_s)·ln(2m/δ))`; the bound is meaningful only for `ε < 1`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{psd_leq, psd_tolerance, sym_eigen};
use crate::model::{expected_information, selection_information, SamplingDistribution, SensorPool};
use crate::policies::sample_selection;
use crate::rng::{domain, substream};
use crate::scalar::Scalar;

/// Relative eigenvalue cutoff defining the numerical range of `E[Z]`.
pub const RANGE_TOL: f64 = 1e-10;

fn validate(n_s: usize, m: usize, delta: f64) -> Result<()> {
    if n_s == 0 {
        return Err(Error::Invalid("n_s must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::Invalid("m must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `ln(2m/δ)`.
fn log_term(m: usize, delta: f64) -> f64 {
    (2.0 * m as f64 / delta).ln()
}

/// `√((4ρ/n_s)·ln(2m/δ))` without the `ε < 1` check.
pub fn epsilon_value(rho: f64, n_s: usize, m: usize, delta: f64) -> Result<f64> {
    validate(n_s, m, delta)?;
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::Invalid(format!("rho must be at least 1, got {rho}")));
    }
    Ok((4.0 * rho / n_s as f64 * log_term(m, delta)).sqrt())
}

/// Deviation level `ε`; fails with `EpsilonInfeasible` when `ε ≥ 1`.
pub fn epsilon(rho: f64, n_s: usize, m: usize, delta: f64) -> Result<f64> {
    let eps = epsilon_value(rho, n_s, m, delta)?;
    if eps >= 1.0 {
        return Err(Error::EpsilonInfeasible { epsilon: eps, rho });
    }
    Ok(eps)
}

/// Smallest `n_s` with `n_s ≥ (4ρ/ε²)·ln(2m/δ)`.
pub fn required_samples(rho: f64, eps: f64, m: usize, delta: f64) -> Result<usize> {
    validate(1, m, delta)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(rho >= 1.0) {
        return Err(Error::Invalid(format!("rho must be at least 1, got {rho}")));
    }
    Ok((4.0 * rho / (eps * eps) * log_term(m, delta)).ceil() as usize)
}

/// Half-open interval `[lo, hi)` of admissible dominance constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoInterval {
    pub lo: f64,
    pub hi: f64,
}

impl RhoInterval {
    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.lo && rho < self.hi
    }
}

/// `[1, n_s / (4·ln(2m/δ)))`, the values of `ρ` keeping `ε < 1`.
pub fn feasible_rho_interval(n_s: usize, m: usize, delta: f64) -> Result<RhoInterval> {
    validate(n_s, m, delta)?;
    Ok(RhoInterval {
        lo: 1.0,
        hi: n_s as f64 / (4.0 * log_term(m, delta)),
    })
}

/// Validated `(n_s, m, δ, ρ, ε)` tuple with `ε < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationParams {
    pub n_s: usize,
    pub m: usize,
    pub delta: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl ConcentrationParams {
    pub fn new(n_s: usize, m: usize, delta: f64, rho: f64) -> Result<Self> {
        let epsilon = epsilon(rho, n_s, m, delta)?;
        Ok(Self {
            n_s,
            m,
            delta,
            rho,
            epsilon,
        })
    }
}

fn numerical_rank<T: Scalar>(m: &DMatrix<T>) -> usize {
    let ev = sym_eigen(m).eigenvalues;
    let top = ev.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if top <= T::zero() {
        return 0;
    }
    ev.iter().filter(|&&l| l > T::of(RANGE_TOL) * top).count()
}

/// Smallest `ρ ≥ 1` with `𝒵_j ⪯ ρ·E[Z]` for every sensor in the pool.
///
/// Computed on the numerical range of `E[Z] = VΛVᵀ` as
/// `max_j λ_max(Λ^{-1/2} Vᵀ 𝒵_j V Λ^{-1/2})`. Fails with `RangeInfeasible`
/// when some `𝒵_j` has a component outside that range.
pub fn rho_min<T: Scalar>(pool: &SensorPool<T>, p: &SamplingDistribution<T>) -> Result<T> {
    let e = expected_information(pool, p)?;
    let eig = sym_eigen(&e);
    let top = eig.eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cutoff = T::of(RANGE_TOL) * top;
    let m = e.nrows();
    let (range, null): (Vec<usize>, Vec<usize>) = (0..m).partition(|&k| top > T::zero() && eig.eigenvalues[k] > cutoff);
    let v = &eig.eigenvectors;
    let vr = DMatrix::from_fn(m, range.len(), |i, k| v[(i, range[k])] / eig.eigenvalues[range[k]].sqrt());
    let vn = DMatrix::from_fn(m, null.len(), |i, k| v[(i, null[k])]);
    let mut worst = T::one();
    for (j, z) in pool.information().iter().enumerate() {
        let zscale = z.trace().max(top);
        if !null.is_empty() {
            let leak = vn.transpose() * z * &vn;
            if leak.iter().any(|x| x.abs() > T::of(RANGE_TOL) * zscale) {
                return Err(Error::RangeInfeasible { sensor: j });
            }
        }
        if range.is_empty() {
            continue;
        }
        let w = vr.transpose() * z * &vr;
        let lmax = sym_eigen(&w).eigenvalues.max();
        worst = worst.max(lmax);
    }
    Ok(worst)
}

/// Lower bound on `rho_min(p)` valid for every distribution `p`:
/// `max(1, r / k)` where `r` is the rank spanned by all `𝒵_j` and `k` the
/// largest individual rank. Every feasible `E[Z]` must have rank `r`, and
/// averaging `λ_max(E^{-1/2} 𝒵_j E^{-1/2}) ≥ tr(E⁺𝒵_j)/k` over `p` gives `r/k`.
pub fn rho_floor<T: Scalar>(pool: &SensorPool<T>) -> f64 {
    let m = pool.dim();
    let total = pool
        .information()
        .iter()
        .fold(DMatrix::<T>::zeros(m, m), |acc, z| acc + z);
    let span = numerical_rank(&total);
    let k = pool.information().iter().map(numerical_rank).max().unwrap_or(0);
    if k == 0 {
        return 1.0;
    }
    (span as f64 / k as f64).max(1.0)
}

/// Fraction of `trials` random selections whose information sum lies in the
/// band `(1−ε)·n_s·E[Z] ⪯ Σ Z_j ⪯ (1+ε)·n_s·E[Z]`.
pub fn aw_empirical_coverage<T: Scalar>(
    pool: &SensorPool<T>,
    p: &SamplingDistribution<T>,
    n_s: usize,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if trials == 0 || n_s == 0 {
        return Err(Error::Invalid("trials and n_s must be at least 1".into()));
    }
    let mean = expected_information(pool, p)? * T::of(n_s as f64);
    let lower = &mean * T::of(1.0 - eps);
    let upper = &mean * T::of(1.0 + eps);
    let hits = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<usize> {
            let mut rng = substream(seed, domain::CONCENTRATION, trial as u64);
            let sel = sample_selection(p, n_s, &mut rng)?;
            let sum = selection_information(pool, &sel)?;
            let inside = psd_leq(&lower, &sum, psd_tolerance(&lower, &sum))
                && psd_leq(&sum, &upper, psd_tolerance(&sum, &upper));
            Ok(usize::from(inside))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CandidateSensor;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn pool(cs: &[&[f64]]) -> SensorPool {
        SensorPool::new(
            cs.iter()
                .map(|c| CandidateSensor::new(DVector::from_row_slice(c), 1.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn dist(w: &[f64]) -> SamplingDistribution {
        SamplingDistribution::new(DVector::from_row_slice(w)).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        // sqrt(0.04 * ln 60)
        let expected = (0.04 * 60f64.ln()).sqrt();
        assert_relative_eq!(epsilon(1.0, 100, 3, 0.1).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.404690, epsilon = 1e-6);
        assert!(epsilon(1.0, 10_000_000, 3, 0.1).unwrap() < 1e-2);
        // 4 ln 60 / 16 ≈ 1.024
        assert!(matches!(epsilon(1.0, 16, 3, 0.1), Err(Error::EpsilonInfeasible { .. })));
        assert!(epsilon(0.5, 100, 3, 0.1).is_err());
        assert!(epsilon(1.0, 100, 3, 1.0).is_err());
    }

    #[test]
    fn epsilon_monotonicity() {
        let base = epsilon_value(2.0, 200, 3, 0.1).unwrap();
        assert!(epsilon_value(2.5, 200, 3, 0.1).unwrap() > base);
        assert!(epsilon_value(2.0, 300, 3, 0.1).unwrap() < base);
        assert!(epsilon_value(2.0, 200, 3, 0.05).unwrap() > base);
    }

    #[test]
    fn required_samples_examples() {
        assert_eq!(required_samples(1.0, 0.404690, 3, 0.1).unwrap(), 100);
        let n1 = required_samples(1.0, 0.2, 3, 0.1).unwrap();
        let n2 = required_samples(1.0, 0.1, 3, 0.1).unwrap();
        assert!(n2 >= 4 * n1 - 4 && n2 <= 4 * n1);
        let n3 = required_samples(2.0, 0.2, 3, 0.1).unwrap();
        assert!(n3 >= 2 * n1 - 2 && n3 <= 2 * n1);
        for &(rho, e) in &[(1.0, 0.3), (3.7, 0.55), (1.2, 0.05)] {
            let n = required_samples(rho, e, 4, 0.2).unwrap();
            assert!(epsilon_value(rho, n, 4, 0.2).unwrap() <= e);
            assert!(epsilon_value(rho, n - 1, 4, 0.2).unwrap() > e);
        }
    }

    #[test]
    fn feasible_interval_examples() {
        let iv = feasible_rho_interval(100, 3, 0.1).unwrap();
        assert_eq!(iv.lo, 1.0);
        assert_relative_eq!(iv.hi, 100.0 / (4.0 * 60f64.ln()), epsilon = 1e-14);
        assert_relative_eq!(iv.hi, 6.1059, epsilon = 1e-4);
        assert!(feasible_rho_interval(16, 3, 0.1).unwrap().is_empty());
        let doubled = feasible_rho_interval(200, 3, 0.1).unwrap();
        assert_relative_eq!(doubled.hi, 2.0 * iv.hi, epsilon = 1e-14);
        // the interval edge is exactly where epsilon reaches one
        assert_relative_eq!(epsilon_value(iv.hi, 100, 3, 0.1).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rho_min_examples() {
        let identical = pool(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert_relative_eq!(rho_min(&identical, &dist(&[0.2, 0.3, 0.5])).unwrap(), 1.0, epsilon = 1e-12);

        let basis = pool(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_relative_eq!(rho_min(&basis, &dist(&[0.5, 0.5])).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(rho_min(&basis, &dist(&[0.25, 0.75])).unwrap(), 4.0, epsilon = 1e-12);

        assert!(matches!(
            rho_min(&basis, &dist(&[1.0, 0.0])),
            Err(Error::RangeInfeasible { sensor: 1 })
        ));
    }

    #[test]
    fn rho_min_is_at_least_the_floor() {
        let p3 = pool(&[&[1.0, 0.2, 0.0], &[0.1, 1.0, 0.3], &[0.0, 0.4, 1.0], &[0.5, 0.5, 0.5]]);
        assert_eq!(rho_floor(&p3), 3.0);
        for w in [[0.25, 0.25, 0.25, 0.25], [0.4, 0.3, 0.2, 0.1], [0.3, 0.3, 0.4, 0.0]] {
            assert!(rho_min(&p3, &dist(&w)).unwrap() >= 3.0 - 1e-9);
        }
        assert_eq!(rho_floor(&pool(&[&[1.0, 1.0], &[2.0, 2.0]])), 1.0);
    }

    #[test]
    fn coverage_examples() {
        let single = pool(&[&[1.0, 0.5]]);
        let one = dist(&[1.0]);
        assert_eq!(aw_empirical_coverage(&single, &one, 10, 0.01, 20, 1).unwrap(), 1.0);

        let basis = pool(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let half = dist(&[0.5, 0.5]);
        let c = aw_empirical_coverage(&basis, &half, 20_000, 0.999, 20, 1).unwrap();
        assert_eq!(c, 1.0);
        let a = aw_empirical_coverage(&basis, &half, 50, 0.2, 50, 9).unwrap();
        let b = aw_empirical_coverage(&basis, &half, 50, 0.2, 50, 9).unwrap();
        assert_eq!(a, b);
    }
}
