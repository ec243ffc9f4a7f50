//! Dense symmetric-matrix helpers: Loewner-order tests, PSD square roots and
//! SPD inverses.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative scale of the default Loewner-order tolerance.
pub const PSD_TOL_SCALE: f64 = 1e-8;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::of(0.5)
}

pub fn sym_eigen<T: Scalar>(m: &DMatrix<T>) -> SymmetricEigen<T, nalgebra::Dyn> {
    symmetrize(m).symmetric_eigen()
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    sym_eigen(m).eigenvalues.min()
}

pub fn max_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    sym_eigen(m).eigenvalues.max()
}

/// Loewner order test: `a ⪯ b` iff `λ_min(b − a) ≥ −tol`.
pub fn psd_leq<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, tol: T) -> bool {
    assert_eq!(a.shape(), b.shape(), "psd_leq operands must share their order");
    min_eigenvalue(&(b - a)) >= -tol
}

/// Scale-aware tolerance `1e-8·(1 + max(‖a‖_F, ‖b‖_F))` used by ordering checks.
pub fn psd_tolerance<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    T::of(PSD_TOL_SCALE) * (T::one() + a.norm().max(b.norm()))
}

/// `psd_leq` with the default scale-aware tolerance.
pub fn loewner_leq<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> bool {
    psd_leq(a, b, psd_tolerance(a, b))
}

/// Symmetric PSD square root; negative eigenvalues from round-off are clipped.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = sym_eigen(m);
    let roots = eig.eigenvalues.map(|l| l.max(T::zero()).sqrt());
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&roots) * v.transpose()))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("inverse is not finite".into()));
    }
    Ok(symmetrize(&inv))
}

/// `‖a − b‖_F / max(1, ‖a‖_F)`.
pub fn relative_step<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (a - b).norm() / a.norm().max(T::one())
}

/// `‖a − b‖_F / ‖b‖_F`, with an absolute fallback when `b` vanishes.
pub fn relative_frobenius<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let denom = b.norm();
    let diff = (a - b).norm();
    if denom > T::zero() {
        diff / denom
    } else {
        diff
    }
}

/// Numerical rank from singular values with cutoff `n·eps·σ_max`.
pub fn numerical_rank_from_singular_values<T: Scalar>(sv: &[T], n: usize) -> usize {
    let smax = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if smax <= T::zero() {
        return 0;
    }
    let cutoff = T::of(n.max(1) as f64) * T::machine_eps() * smax;
    sv.iter().filter(|&&s| s > cutoff).count()
}
