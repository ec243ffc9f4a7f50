//! Information-form covariance recursion
//!
//! ```text
//! P_t⁻¹ = (A P_{t−1} Aᵀ + Q)⁻¹ + Y
//! ```
//!
//! its steady state, PBH detectability/stabilizability tests, and the
//! lockstep monotone-comparison runner used to check Loewner ordering of
//! three recursions driven by ordered information matrices.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{
    loewner_leq, min_eigenvalue, numerical_rank_from_singular_values, psd_tolerance, relative_step,
    spd_inverse, symmetrize,
};
use crate::model::SystemModel;
use crate::scalar::Scalar;

/// Iterate norm beyond which the recursion is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct RecursionOptions<T: Scalar = f64> {
    /// Relative Frobenius step tolerance `‖P_t − P_{t−1}‖_F / max(1, ‖P_t‖_F)`.
    pub tol: T,
    pub max_iters: usize,
    /// Starting covariance; `None` means the zero matrix.
    pub p_init: Option<DMatrix<T>>,
}

impl<T: Scalar> Default for RecursionOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-11),
            max_iters: 200_000,
            p_init: None,
        }
    }
}

impl<T: Scalar> RecursionOptions<T> {
    pub fn with_init(mut self, p_init: DMatrix<T>) -> Self {
        self.p_init = Some(p_init);
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateResult<T: Scalar = f64> {
    pub p: DMatrix<T>,
    pub iterations: usize,
    pub residual: T,
}

fn check_square<T: Scalar>(what: &'static str, m: &DMatrix<T>, order: usize) -> Result<()> {
    if m.nrows() != order || m.ncols() != order {
        return Err(Error::DimensionMismatch {
            what,
            expected: order,
            got: if m.nrows() != order { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// One step of the recursion: `((A P Aᵀ + Q)⁻¹ + Y)⁻¹`, symmetrized.
pub fn information_step<T: Scalar>(model: &SystemModel<T>, p_prev: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = model.order();
    check_square("order of P_prev", p_prev, m)?;
    check_square("order of Y", y, m)?;
    let a = model.a();
    let predicted = a * p_prev * a.transpose() + model.q();
    let info = spd_inverse(&predicted)
        .map_err(|_| Error::Numerical("A P Aᵀ + Q is not invertible".into()))?
        + y;
    spd_inverse(&info).map_err(|_| Error::Numerical("posterior information matrix is not invertible".into()))
}

/// Runs the recursion to its fixed point. Stops once the relative step is
/// within `tol` and the extrapolated distance to the fixed point is too.
pub fn steady_state<T: Scalar>(
    model: &SystemModel<T>,
    y: &DMatrix<T>,
    opts: &RecursionOptions<T>,
) -> Result<SteadyStateResult<T>> {
    let m = model.order();
    check_square("order of Y", y, m)?;
    if !(opts.tol > T::zero()) || opts.max_iters == 0 {
        return Err(Error::Invalid("recursion needs tol > 0 and max_iters >= 1".into()));
    }
    let mut p = match &opts.p_init {
        Some(p0) => {
            check_square("order of P_init", p0, m)?;
            if min_eigenvalue(p0) < -psd_tolerance(p0, p0) {
                return Err(Error::Invalid("P_init must be positive semidefinite".into()));
            }
            symmetrize(p0)
        }
        None => DMatrix::zeros(m, m),
    };
    let limit = T::of(DIVERGENCE_NORM);
    let mut residual = T::zero();
    let mut previous = T::of(f64::INFINITY);
    let floor = T::of(100.0) * T::machine_eps();
    for it in 1..=opts.max_iters {
        let next = information_step(model, &p, y)?;
        let norm = next.norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Diverging { iterations: it });
        }
        residual = relative_step(&next, &p);
        let step = (&next - &p).norm();
        p = next;
        // A small relative step alone does not bound the distance to the
        // fixed point under slow contraction. Also require the geometric tail
        // `‖ΔP‖·k/(1−k)`, with `k` the observed step ratio, to be within tol,
        // unless the step has stalled at round-off level.
        let k = residual / previous;
        previous = residual;
        let tail_ok = residual <= floor || k >= T::one() || step * k / (T::one() - k) <= opts.tol;
        if residual <= opts.tol && tail_ok {
            return Ok(SteadyStateResult {
                p,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergent {
        iterations: opts.max_iters,
        residual: residual.as_f64(),
    })
}

/// Runs exactly `steps` iterations from `p_init` (no convergence test).
pub fn finite_horizon<T: Scalar>(
    model: &SystemModel<T>,
    y: &DMatrix<T>,
    p_init: &DMatrix<T>,
    steps: usize,
) -> Result<DMatrix<T>> {
    let mut p = p_init.clone();
    for _ in 0..steps {
        p = information_step(model, &p, y)?;
    }
    Ok(p)
}

/// Closed-form positive root of the scalar fixed point
/// `y a² P² + (1 + y q − a²) P − q = 0`, written in the cancellation-free form
/// `P = 2q / (b + √(b² + 4 y a² q))`. Serves as an oracle for [`steady_state`].
pub fn steady_state_scalar_oracle<T: Scalar>(a: T, q: T, y: T) -> Result<T> {
    if !(q > T::zero()) || y < T::zero() {
        return Err(Error::Invalid("scalar oracle needs q > 0 and y >= 0".into()));
    }
    let a2 = a * a;
    if y == T::zero() && a2 >= T::one() {
        return Err(Error::NoSolution(format!(
            "|a| = {} >= 1 with no measurement information",
            a.abs()
        )));
    }
    let b = T::one() + y * q - a2;
    let disc = b * b + T::of(4.0) * y * a2 * q;
    Ok(T::of(2.0) * q / (b + disc.sqrt()))
}

fn eigenvalue_is_unstable<T: Scalar>(lambda: &Complex<T>) -> bool {
    (lambda.re * lambda.re + lambda.im * lambda.im).sqrt() >= T::one() - T::of(1e-10)
}

fn complex_rank<T: Scalar>(m: &DMatrix<Complex<T>>) -> usize {
    let n = m.nrows().max(m.ncols());
    let sv: Vec<T> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    // 100x headroom over n·eps·σ_max absorbs the error in the computed eigenvalue.
    numerical_rank_from_singular_values(&sv, 100 * n)
}

fn complexify<T: Scalar>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

fn pbh_columns<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>, unstable_only: bool) -> bool {
    let m = a.nrows();
    assert!(a.is_square(), "A must be square");
    assert!(c.nrows() == 0 || c.ncols() == m, "C must have m columns");
    let ac = complexify(a);
    let cc = complexify(c);
    a.complex_eigenvalues().iter().all(|lambda| {
        if unstable_only && !eigenvalue_is_unstable(lambda) {
            return true;
        }
        let mut stacked = DMatrix::<Complex<T>>::zeros(m + c.nrows(), m);
        stacked
            .view_mut((0, 0), (m, m))
            .copy_from(&(&ac - DMatrix::<Complex<T>>::identity(m, m) * *lambda));
        if c.nrows() > 0 {
            stacked.view_mut((m, 0), (c.nrows(), m)).copy_from(&cc);
        }
        complex_rank(&stacked) == m
    })
}

/// PBH detectability: `[A − λI; C]` has full column rank at every eigenvalue
/// with `|λ| ≥ 1`.
pub fn is_detectable<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> bool {
    pbh_columns(a, c, true)
}

/// PBH observability: full column rank at every eigenvalue of `A`.
pub fn is_observable<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> bool {
    pbh_columns(a, c, false)
}

/// Dual PBH test: `[A − λI, B]` has full row rank at every `|λ| ≥ 1`.
pub fn is_stabilizable<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> bool {
    let bt = if b.ncols() == 0 {
        DMatrix::zeros(0, a.nrows())
    } else {
        b.transpose()
    };
    pbh_columns(&a.transpose(), &bt, true)
}

/// Three recursions run in lockstep, stored per step as `[P₁, P₂, P₃]`.
///
/// Recursion 1 is driven by the largest information matrix `Y₃` and recursion
/// 3 by the smallest `Y₁`, so under the preconditions the iterates satisfy
/// `P₁ ⪯ P₂ ⪯ P₃` at every step.
#[derive(Debug, Clone)]
pub struct MonotoneTrace<T: Scalar = f64> {
    pub steps: Vec<[DMatrix<T>; 3]>,
}

impl<T: Scalar> MonotoneTrace<T> {
    /// Index of the first step violating `P₁ ⪯ P₂ ⪯ P₃` under the default
    /// scale-aware tolerance, if any.
    pub fn first_violation(&self) -> Option<usize> {
        self.steps
            .iter()
            .position(|[p1, p2, p3]| !(loewner_leq(p1, p2) && loewner_leq(p2, p3)))
    }
}

/// Lockstep runner for three ordered information matrices
/// `0 ⪯ Y₁ ⪯ Y₂ ⪯ Y₃` and initial covariances `0 ⪯ P₁ ⪯ P₂ ⪯ P₃`.
/// The returned trace starts with the initial covariances.
pub fn monotone_recursion_triple<T: Scalar>(
    model: &SystemModel<T>,
    y: [&DMatrix<T>; 3],
    p_init: [&DMatrix<T>; 3],
    steps: usize,
) -> Result<MonotoneTrace<T>> {
    let m = model.order();
    for (k, yk) in y.iter().enumerate() {
        check_square("order of Y_i", yk, m)?;
        check_square("order of P_i,init", p_init[k], m)?;
    }
    let zero = DMatrix::zeros(m, m);
    let checks = [
        (&zero, y[0], "0 ⪯ Y1"),
        (y[0], y[1], "Y1 ⪯ Y2"),
        (y[1], y[2], "Y2 ⪯ Y3"),
        (&zero, p_init[0], "0 ⪯ P1_init"),
        (p_init[0], p_init[1], "P1_init ⪯ P2_init"),
        (p_init[1], p_init[2], "P2_init ⪯ P3_init"),
    ];
    for (lo, hi, name) in checks {
        if !loewner_leq(lo, hi) {
            return Err(Error::PreconditionViolated(format!("{name} does not hold")));
        }
    }
    let drivers = [y[2], y[1], y[0]];
    let mut current = [p_init[0].clone(), p_init[1].clone(), p_init[2].clone()];
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(current.clone());
    for _ in 0..steps {
        let next = [
            information_step(model, &current[0], drivers[0])?,
            information_step(model, &current[1], drivers[1])?,
            information_step(model, &current[2], drivers[2])?,
        ];
        trace.push(next.clone());
        current = next;
    }
    Ok(MonotoneTrace { steps: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_model(a: f64, q: f64) -> SystemModel {
        SystemModel::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, q)).unwrap()
    }

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn information_step_examples() {
        let static_model = scalar_model(0.0, 1.0);
        assert_relative_eq!(information_step(&static_model, &s(7.0), &s(1.0)).unwrap()[(0, 0)], 0.5);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let m2 = SystemModel::new(DMatrix::zeros(2, 2), q.clone()).unwrap();
        assert_relative_eq!(
            information_step(&m2, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).unwrap(),
            q,
            epsilon = 1e-14
        );
        let unit = scalar_model(1.0, 1.0);
        assert_relative_eq!(
            information_step(&unit, &s(1.0), &s(1.0)).unwrap()[(0, 0)],
            2.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn information_step_single_precision() {
        let m = SystemModel::<f32>::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = information_step(&m, &DMatrix::from_element(1, 1, 1.0f32), &DMatrix::from_element(1, 1, 1.0f32))
            .unwrap();
        assert_relative_eq!(p[(0, 0)], 2.0f32 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn steady_state_examples() {
        let opts = RecursionOptions::default();
        let r = steady_state(&scalar_model(0.0, 1.0), &s(1.0), &opts).unwrap();
        assert_relative_eq!(r.p[(0, 0)], 0.5, epsilon = 1e-12);
        let r = steady_state(&scalar_model(1.0, 1.0), &s(1.0), &opts).unwrap();
        assert_relative_eq!(r.p[(0, 0)], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
        assert!(r.residual <= opts.tol);
        let r = steady_state(&scalar_model(0.5, 1.0), &s(0.0), &opts).unwrap();
        assert_relative_eq!(r.p[(0, 0)], 4.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn steady_state_reports_divergence() {
        let err = steady_state(&scalar_model(2.0, 1.0), &s(0.0), &RecursionOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Diverging { .. }));
        let opts = RecursionOptions { max_iters: 3, ..Default::default() };
        let err = steady_state(&scalar_model(0.9, 1.0), &s(0.0), &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergent { iterations: 3, .. }));
    }

    #[test]
    fn oracle_examples() {
        assert_relative_eq!(steady_state_scalar_oracle(0.0, 1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(
            steady_state_scalar_oracle(1.0, 1.0, 1.0).unwrap(),
            (5f64.sqrt() - 1.0) / 2.0,
            epsilon = 1e-15
        );
        assert!(matches!(steady_state_scalar_oracle(1.0, 1.0, 0.0), Err(Error::NoSolution(_))));
        assert_relative_eq!(steady_state_scalar_oracle(0.5, 1.0, 0.0).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn oracle_root_satisfies_the_quadratic() {
        for &(a, q, y) in &[(1.3f64, 0.7f64, 0.2f64), (0.2, 1.9, 1.5), (1.5, 0.1, 0.01)] {
            let p = steady_state_scalar_oracle(a, q, y).unwrap();
            let lhs = y * a * a * p * p + (1.0 + y * q - a * a) * p - q;
            assert!(lhs.abs() < 1e-12 * (1.0 + p * p), "residual {lhs}");
            assert!(p > 0.0);
        }
    }

    #[test]
    fn pbh_examples() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[2.0, 0.5]));
        assert!(is_detectable(&a, &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])));
        assert!(!is_detectable(&a, &DMatrix::from_row_slice(1, 2, &[0.0, 1.0])));
        assert!(is_detectable(&s(0.5), &DMatrix::zeros(0, 1)));
        assert!(is_detectable(&s(0.5), &s(0.0)));

        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.5]);
        let rotation = DMatrix::from_row_slice(2, 2, &[0.0, -1.2, 1.2, 0.0]);
        assert!(is_stabilizable(&rotation, &crate::linalg::psd_sqrt(&q)));
        assert!(!is_stabilizable(&s(2.0), &s(0.0)));
        let stable = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[0.1, 0.2]));
        assert!(is_stabilizable(&stable, &DMatrix::zeros(2, 2)));
    }

    #[test]
    fn pbh_handles_complex_unstable_modes() {
        // rotation with modulus 1.2 observed through one coordinate
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.2, 0.0, 1.2, 0.0, 0.0, 0.0, 0.0, 0.3]);
        assert!(is_detectable(&a, &DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])));
        assert!(!is_detectable(&a, &DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])));
        assert!(!is_observable(&a, &DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])));
        assert!(is_observable(&a, &DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0])));
    }

    #[test]
    fn monotone_triple_examples() {
        let model = scalar_model(0.0, 1.0);
        let (y1, y2, y3) = (s(0.0), s(1.0), s(2.0));
        let z = s(0.0);
        let trace = monotone_recursion_triple(&model, [&y1, &y2, &y3], [&z, &z, &z], 5).unwrap();
        for [p1, p2, p3] in trace.steps.iter().skip(1) {
            assert_relative_eq!(p1[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
            assert_relative_eq!(p2[(0, 0)], 0.5, epsilon = 1e-15);
            assert_relative_eq!(p3[(0, 0)], 1.0, epsilon = 1e-15);
        }
        assert_eq!(trace.first_violation(), None);

        let same = monotone_recursion_triple(&model, [&y2, &y2, &y2], [&z, &z, &z], 4).unwrap();
        assert!(same.steps.iter().all(|[a, b, c]| a == b && b == c));

        let err = monotone_recursion_triple(&model, [&y3, &y2, &y1], [&z, &z, &z], 1).unwrap_err();
        assert!(err.to_string().contains("Y1 ⪯ Y2"), "{err}");
    }
}
