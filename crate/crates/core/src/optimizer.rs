//! Optimal sampling distribution for a fixed dominance constant, and the
//! search over that constant.
//!
//! For fixed `ρ` (hence fixed `ε`), the program maximizes `λ` over
//! `(λ, X, p)` subject to
//!
//! * `X − ηI ⪰ 0` and `X − λI ⪰ 0`,
//! * the Schur block
//!   `[[X + AᵀQ⁻¹A, AᵀQ⁻¹], [Q⁻¹A, Q⁻¹ + (1−ε)·n_s·Σ p_j 𝒵_j − X]] ⪰ 0`,
//!   which by the matrix inversion lemma says `X ⪯ (Q + A X⁻¹ Aᵀ)⁻¹ + (1−ε)·n_s·E[Z]`,
//!   i.e. `X` lies below the information-form fixed point `P_U⁻¹`,
//! * `ρ·Σ p_j 𝒵_j − 𝒵_i ⪰ 0` for every sensor `i`,
//! * `p ≥ 0`, `Σ p = 1`, `λ ≥ 10⁻¹²`.
//!
//! At the optimum `X = P_U⁻¹` and `λ* = 1/λ_max(P_U(p*))`. The Schur block
//! couples `X` to itself rather than to `λ`: with `λI` in the lower-right
//! corner `X` is left unconstrained from above and `λ*` only bounds
//! `λ_min(Q⁻¹ + (1−ε)·n_s·E[Z])`, which can sit well above `1/λ_max(P_U)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::bounds_for_epsilon;
use crate::concentration::{epsilon, feasible_rho_interval, rho_floor, rho_min, RANGE_TOL};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, spd_inverse, sym_eigen, symmetrize};
use crate::model::{matrix_to_rows, SamplingDistribution, SensorPool, SystemModel};
use crate::scalar::Scalar;
use crate::sdp::{AffineMap, BarrierSolver, ConicSolver, ConstraintSlack, LmiProgram, SolverStatus};

pub const DEFAULT_ETA: f64 = 1e-6;
pub const LAMBDA_FLOOR: f64 = 1e-12;
/// Largest admissible `ε`; closes the open interval `ε < 1`.
pub const EPS_CEILING: f64 = 1.0 - 1e-9;
pub const DEFAULT_GRID_POINTS: usize = 16;
pub const DEFAULT_GAMMA: f64 = 1e-3;
/// Slack on `rho_min(p*) ≤ ρ` when auditing a solution.
pub const RHO_AUDIT_SLACK: f64 = 1e-8;

/// A fully assembled program together with the parameters it encodes.
///
/// Variables are laid out as `[λ, X (upper triangle, row-major), p]`.
#[derive(Debug, Clone)]
pub struct SdpInstance {
    pub m: usize,
    pub n_c: usize,
    pub n_s: usize,
    pub delta: f64,
    pub rho: f64,
    pub eps: f64,
    pub eta: f64,
    pub program: LmiProgram,
}

impl SdpInstance {
    pub fn lambda_var(&self) -> usize {
        0
    }

    pub fn x_var(&self, i: usize, j: usize) -> usize {
        x_var(self.m, i, j)
    }

    pub fn p_var(&self, j: usize) -> usize {
        1 + self.m * (self.m + 1) / 2 + j
    }

    /// Order of every LMI block, in constraint order.
    pub fn block_dims(&self) -> Vec<usize> {
        self.program.lmis.iter().map(|c| self.program.maps[c.map].dim()).collect()
    }

    fn unpack(&self, x: &DVector<f64>) -> (f64, DMatrix<f64>, DVector<f64>) {
        let m = self.m;
        let xm = DMatrix::from_fn(m, m, |i, j| x[self.x_var(i, j)]);
        let p = DVector::from_fn(self.n_c, |j, _| x[self.p_var(j)]);
        (x[self.lambda_var()], xm, p)
    }
}

fn x_var(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    1 + i * m - i * i.saturating_sub(1) / 2 + (j - i)
}

fn sym_basis(m: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, m);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

#[derive(Debug, Clone, Copy)]
enum SchurForm {
    /// `Q⁻¹ + (1−ε)·n_s·E[Z] − X` in the lower-right corner plus `X ⪰ λI`.
    Coupled,
    /// `Q⁻¹ + (1−ε)·n_s·E[Z] − λI` in the lower-right corner, with `X ⪯ cap·I`
    /// added so the program stays bounded.
    #[cfg_attr(not(test), allow(dead_code))]
    Uncoupled { cap: f64 },
}

fn to_f64<T: Scalar>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.as_f64())
}

/// Orthonormal basis of the span of all information matrices.
fn pool_range(z: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = z[0].nrows();
    let total = z.iter().fold(DMatrix::zeros(m, m), |a, b| a + b);
    let eig = sym_eigen(&total);
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > RANGE_TOL * top).collect();
    DMatrix::from_fn(m, keep.len(), |i, c| eig.eigenvectors[(i, keep[c])])
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
    delta: f64,
    rho: f64,
    eta: f64,
    form: SchurForm,
) -> Result<SdpInstance> {
    pool.check_model(model)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Invalid(format!("eta must be positive, got {eta}")));
    }
    let m = model.order();
    let n_c = pool.len();
    let eps = epsilon(rho, n_s, m, delta)?;
    if eps > EPS_CEILING {
        return Err(Error::EpsilonInfeasible { epsilon: eps, rho });
    }

    let a = to_f64(model.a());
    let q_inv = spd_inverse(&to_f64(model.q()))?;
    let z: Vec<DMatrix<f64>> = pool.information().iter().map(to_f64).collect();
    let n_x = m * (m + 1) / 2;
    let n_vars = 1 + n_x + n_c;
    let p_var = |j: usize| 1 + n_x + j;

    let mut objective = DVector::zeros(n_vars);
    objective[0] = 1.0;
    let mut program = LmiProgram::new(n_vars, objective);

    let x_terms = |map: AffineMap| {
        let mut map = map;
        for i in 0..m {
            for j in i..m {
                map = map.term(x_var(m, i, j), sym_basis(m, i, j));
            }
        }
        map
    };

    // X − ηI ⪰ 0
    let map = program.add_map(x_terms(AffineMap::new(m)));
    program.add_lmi("X - eta I", map, Some(DMatrix::from_diagonal_element(m, m, -eta)));

    // Schur block
    let at_qi = a.transpose() * &q_inv;
    let mut constant = DMatrix::zeros(2 * m, 2 * m);
    constant.view_mut((0, 0), (m, m)).copy_from(&symmetrize(&(&at_qi * &a)));
    constant.view_mut((0, m), (m, m)).copy_from(&at_qi);
    constant.view_mut((m, 0), (m, m)).copy_from(&at_qi.transpose());
    constant.view_mut((m, m), (m, m)).copy_from(&q_inv);
    let mut schur = AffineMap::new(2 * m).with_constant(constant);
    let embed = |block: &DMatrix<f64>, corner: usize| {
        let mut e = DMatrix::zeros(2 * m, 2 * m);
        e.view_mut((corner, corner), (m, m)).copy_from(block);
        e
    };
    for i in 0..m {
        for j in i..m {
            let e = sym_basis(m, i, j);
            let mut f = embed(&e, 0);
            if let SchurForm::Coupled = form {
                f -= embed(&e, m);
            }
            schur = schur.term(x_var(m, i, j), f);
        }
    }
    if let SchurForm::Uncoupled { .. } = form {
        schur = schur.term(0, -embed(&DMatrix::identity(m, m), m));
    }
    let scale = (1.0 - eps) * n_s as f64;
    for (j, zj) in z.iter().enumerate() {
        schur = schur.term(p_var(j), embed(&(zj * scale), m));
    }
    let map = program.add_map(schur);
    program.add_lmi("Schur", map, None);

    match form {
        SchurForm::Coupled => {
            let map = program.add_map(x_terms(AffineMap::new(m)).term(0, -DMatrix::identity(m, m)));
            program.add_lmi("X - lambda I", map, None);
        }
        SchurForm::Uncoupled { cap } => {
            let mut neg = AffineMap::new(m);
            for i in 0..m {
                for j in i..m {
                    neg = neg.term(x_var(m, i, j), -sym_basis(m, i, j));
                }
            }
            let map = program.add_map(neg);
            program.add_lmi("cap I - X", map, Some(DMatrix::from_diagonal_element(m, m, cap)));
        }
    }

    // dominance blocks, restricted to the span of the pool
    let u = pool_range(&z);
    let zp: Vec<DMatrix<f64>> = z.iter().map(|zj| symmetrize(&(u.transpose() * zj * &u))).collect();
    let r = u.ncols();
    let mut dom = AffineMap::new(r);
    for (j, zj) in zp.iter().enumerate() {
        dom = dom.term(p_var(j), zj * rho);
    }
    let map = program.add_map(dom);
    for (i, zi) in zp.iter().enumerate() {
        program.add_lmi(format!("dominance[{i}]"), map, Some(-zi));
    }

    program.add_linear("lambda >= floor", vec![(0, 1.0)], -LAMBDA_FLOOR);
    for j in 0..n_c {
        program.add_linear(format!("p[{j}] >= 0"), vec![(p_var(j), 1.0)], 0.0);
    }
    program.add_equality("simplex", (0..n_c).map(|j| (p_var(j), 1.0)).collect(), -1.0);

    let mut x0 = DVector::zeros(n_vars);
    for i in 0..m {
        x0[x_var(m, i, i)] = 1.0;
    }
    for j in 0..n_c {
        x0[p_var(j)] = 1.0 / n_c as f64;
    }
    program.initial = Some(x0);

    Ok(SdpInstance {
        m,
        n_c,
        n_s,
        delta,
        rho,
        eps,
        eta,
        program,
    })
}

/// Assembles the program for `(n_s, δ, ρ, η)`.
pub fn build_sdp<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
    delta: f64,
    rho: f64,
    eta: f64,
) -> Result<SdpInstance> {
    assemble(model, pool, n_s, delta, rho, eta, SchurForm::Coupled)
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolverStatus,
    pub lambda_star: f64,
    pub x_star: DMatrix<f64>,
    pub p_star: SamplingDistribution<f64>,
    /// Minimum-eigenvalue slack of every block and value of every linear row.
    pub residuals: Vec<ConstraintSlack>,
    pub rho: f64,
    pub eps: f64,
    pub eta: f64,
    /// Duality-gap bound reported by the solver.
    pub gap: f64,
    pub newton_steps: usize,
    pub message: String,
    point: DVector<f64>,
}

impl SdpSolution {
    pub fn min_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    /// Raw solver variables `[λ, X, p]`.
    pub fn point(&self) -> &DVector<f64> {
        &self.point
    }

    pub fn report(&self) -> SdpSolutionReport {
        SdpSolutionReport {
            status: self.status,
            lambda_star: self.lambda_star,
            x_star: matrix_to_rows(&self.x_star),
            p_star: self.p_star.weights().iter().copied().collect(),
            residuals: self.residuals.clone(),
            rho: self.rho,
            eps: self.eps,
            eta: self.eta,
            gap: self.gap,
        }
    }
}

/// JSON view of an [`SdpSolution`].
#[derive(Debug, Clone, Serialize)]
pub struct SdpSolutionReport {
    pub status: SolverStatus,
    pub lambda_star: f64,
    #[serde(rename = "X_star")]
    pub x_star: Vec<Vec<f64>>,
    pub p_star: Vec<f64>,
    pub residuals: Vec<ConstraintSlack>,
    pub rho: f64,
    pub eps: f64,
    pub eta: f64,
    pub gap: f64,
}

/// Solves with the bundled [`BarrierSolver`].
pub fn solve_sdp(instance: &SdpInstance) -> Result<SdpSolution> {
    solve_sdp_with(instance, &BarrierSolver::default())
}

pub fn solve_sdp_with(instance: &SdpInstance, solver: &dyn ConicSolver) -> Result<SdpSolution> {
    let out = solver.solve(&instance.program)?;
    let (lambda_star, x_star, p_raw) = instance.unpack(&out.x);
    let p_star = SamplingDistribution::normalized(p_raw)
        .or_else(|_| SamplingDistribution::new(DVector::from_element(instance.n_c, 1.0 / instance.n_c as f64)))?;
    Ok(SdpSolution {
        status: out.status,
        lambda_star,
        x_star: symmetrize(&x_star),
        p_star,
        residuals: instance.program.slacks(&out.x),
        rho: instance.rho,
        eps: instance.eps,
        eta: instance.eta,
        gap: out.gap,
        newton_steps: out.newton_steps,
        message: out.message,
        point: out.x,
    })
}

fn distribution_as<T: Scalar>(p: &SamplingDistribution<f64>) -> Result<SamplingDistribution<T>> {
    SamplingDistribution::normalized(p.weights().map(T::of))
}

/// Outcome of [`optimize_for_rho`].
#[derive(Debug, Clone)]
pub struct RhoEvaluation {
    pub solution: SdpSolution,
    /// `λ_max(P_U(p*))` from the Riccati recursion.
    pub lambda_max_pu: f64,
    /// `|1/λ* − λ_max(P_U(p*))|`.
    pub gap: f64,
}

/// Solves the program at a fixed `ρ` and evaluates `λ_max(P_U)` at the
/// returned distribution by the Riccati recursion.
pub fn optimize_for_rho<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
    delta: f64,
    rho: f64,
    eta: f64,
) -> Result<RhoEvaluation> {
    let instance = build_sdp(model, pool, n_s, delta, rho, eta)?;
    let solution = solve_sdp(&instance)?;
    match solution.status {
        SolverStatus::Optimal => {}
        SolverStatus::Infeasible => return Err(Error::SdpInfeasible { rho }),
        SolverStatus::NumericalTrouble => {
            return Err(Error::Numerical(format!("solver failed at rho = {rho}: {}", solution.message)))
        }
    }
    let p = distribution_as::<T>(&solution.p_star)?;
    let (upper, _) = bounds_for_epsilon(model, pool, &p, n_s, solution.eps)?;
    let lambda_max_pu = max_eigenvalue(&upper.p).as_f64();
    let gap = (1.0 / solution.lambda_star - lambda_max_pu).abs();
    Ok(RhoEvaluation {
        solution,
        lambda_max_pu,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Feasible,
    Infeasible,
    NumericalTrouble,
    /// The search optimum, appended to sweeps.
    Optimal,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Feasible => "feasible",
            PointStatus::Infeasible => "infeasible",
            PointStatus::NumericalTrouble => "numerical_trouble",
            PointStatus::Optimal => "optimal",
        }
    }

    fn of(result: &Result<RhoEvaluation>) -> Self {
        match result {
            Ok(_) => PointStatus::Feasible,
            Err(Error::Numerical(_)) | Err(Error::NonConvergent { .. }) | Err(Error::Diverging { .. }) => PointStatus::NumericalTrouble,
            Err(_) => PointStatus::Infeasible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoTracePoint {
    pub rho: f64,
    #[serde(rename = "lambda_max_PU")]
    pub lambda_max_pu: Option<f64>,
    pub status: PointStatus,
}

impl RhoTracePoint {
    fn from_result(rho: f64, result: &Result<RhoEvaluation>) -> Self {
        Self {
            rho,
            lambda_max_pu: result.as_ref().ok().map(|e| e.lambda_max_pu),
            status: PointStatus::of(result),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RhoSearchResult {
    pub rho_star: f64,
    pub p_star: SamplingDistribution<f64>,
    pub lambda_max_pu: f64,
    /// Every evaluation, sorted by `ρ`.
    pub trace: Vec<RhoTracePoint>,
    pub best: RhoEvaluation,
}

impl RhoSearchResult {
    pub fn report(&self) -> RhoSearchReport {
        RhoSearchReport {
            rho_star: self.rho_star,
            p_star: self.p_star.weights().iter().copied().collect(),
            lambda_max_pu: self.lambda_max_pu,
            trace: self.trace.clone(),
        }
    }
}

/// JSON view of a [`RhoSearchResult`].
#[derive(Debug, Clone, Serialize)]
pub struct RhoSearchReport {
    pub rho_star: f64,
    pub p_star: Vec<f64>,
    #[serde(rename = "lambda_max_PU")]
    pub lambda_max_pu: f64,
    pub trace: Vec<RhoTracePoint>,
}

/// Evaluates [`optimize_for_rho`] at every `ρ` in `rhos`, in parallel, and
/// reports each point in input order.
pub fn evaluate_rho_grid<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
    delta: f64,
    rhos: &[f64],
    eta: f64,
) -> Vec<RhoTracePoint> {
    rhos.par_iter()
        .map(|&rho| RhoTracePoint::from_result(rho, &optimize_for_rho(model, pool, n_s, delta, rho, eta)))
        .collect()
}

/// `[max(1, ρ_floor), ρ_hi]`, the range searched over `ρ`. `ρ_hi` is the
/// largest value with `ε ≤ EPS_CEILING`.
pub fn search_interval<T: Scalar>(pool: &SensorPool<T>, n_s: usize, m: usize, delta: f64) -> Result<(f64, f64)> {
    let interval = feasible_rho_interval(n_s, m, delta)?;
    let lo = rho_floor(pool).max(1.0);
    let hi = interval.hi * EPS_CEILING * EPS_CEILING;
    Ok((lo, hi))
}

/// Evenly spaced `ρ` values covering `[lo, hi]`.
pub fn rho_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Grid evaluation followed by golden-section refinement around the grid
/// minimizer until the bracket is no wider than `gamma`. Infeasible points
/// count as `+∞`.
pub fn search_rho<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
    delta: f64,
    eta: f64,
    gamma: f64,
    grid_points: usize,
) -> Result<RhoSearchResult> {
    if !(gamma > 0.0) {
        return Err(Error::Invalid(format!("gamma must be positive, got {gamma}")));
    }
    if grid_points == 0 {
        return Err(Error::Invalid("the rho grid needs at least one point".into()));
    }
    pool.check_model(model)?;
    let (lo, hi) = search_interval(pool, n_s, model.order(), delta)?;
    if lo > hi {
        return Err(Error::AllInfeasible);
    }
    let eval = |rho: f64| optimize_for_rho(model, pool, n_s, delta, rho, eta);
    let value = |r: &Result<RhoEvaluation>| r.as_ref().map(|e| e.lambda_max_pu).unwrap_or(f64::INFINITY);

    let grid = rho_grid(lo, hi, grid_points);
    let mut evaluated: Vec<(f64, Result<RhoEvaluation>)> = grid.par_iter().map(|&rho| (rho, eval(rho))).collect();
    let best_grid = (0..evaluated.len())
        .filter(|&k| evaluated[k].1.is_ok())
        .min_by(|&i, &j| value(&evaluated[i].1).total_cmp(&value(&evaluated[j].1)))
        .ok_or(Error::AllInfeasible)?;

    if grid.len() > 1 {
        let mut a = grid[best_grid.saturating_sub(1)];
        let mut b = grid[(best_grid + 1).min(grid.len() - 1)];
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = {
            let r = eval(c);
            let v = value(&r);
            evaluated.push((c, r));
            v
        };
        let mut fd = {
            let r = eval(d);
            let v = value(&r);
            evaluated.push((d, r));
            v
        };
        while b - a > gamma {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                let r = eval(c);
                fc = value(&r);
                evaluated.push((c, r));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                let r = eval(d);
                fd = value(&r);
                evaluated.push((d, r));
            }
        }
    }

    let mut trace: Vec<RhoTracePoint> = evaluated.iter().map(|(rho, r)| RhoTracePoint::from_result(*rho, r)).collect();
    trace.sort_by(|x, y| x.rho.total_cmp(&y.rho));
    let (rho_star, best) = evaluated
        .into_iter()
        .filter_map(|(rho, r)| r.ok().map(|e| (rho, e)))
        .min_by(|x, y| x.1.lambda_max_pu.total_cmp(&y.1.lambda_max_pu).then(x.0.total_cmp(&y.0)))
        .ok_or(Error::AllInfeasible)?;
    Ok(RhoSearchResult {
        rho_star,
        p_star: best.solution.p_star.clone(),
        lambda_max_pu: best.lambda_max_pu,
        trace,
        best,
    })
}

/// Audit of a solution against its own constraints and the Riccati recursion.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub rho: f64,
    pub eps: f64,
    pub min_slack: f64,
    pub slacks: Vec<ConstraintSlack>,
    /// `|Σ p − 1|` over the raw solver weights.
    pub simplex_residual: f64,
    pub min_weight: f64,
    pub lambda_star: f64,
    #[serde(rename = "lambda_max_PU")]
    pub lambda_max_pu: Option<f64>,
    /// `|1/λ* − λ_max(P_U(p*))|`.
    pub gap: Option<f64>,
    pub relative_gap: Option<f64>,
    pub rho_min: Option<f64>,
    pub rho_ok: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    /// Slacks `≥ −slack_tol`, simplex residual `≤ simplex_tol`, the dominance
    /// constant respected and the relative gap `≤ gap_tol`.
    pub fn passes(&self, slack_tol: f64, simplex_tol: f64, gap_tol: f64) -> bool {
        self.min_slack >= -slack_tol
            && self.simplex_residual <= simplex_tol
            && self.rho_ok
            && self.relative_gap.is_some_and(|g| g <= gap_tol)
    }
}

/// Reports constraint slacks, simplex residuals, the Riccati cross-check
/// and the dominance constant of `p*`. Failures to evaluate a quantity are
/// recorded in `notes` rather than returned.
pub fn verify_solution<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
    delta: f64,
    rho: f64,
    sol: &SdpSolution,
) -> Result<VerificationReport> {
    let instance = build_sdp(model, pool, n_s, delta, rho, sol.eta)?;
    if sol.point.len() != instance.program.n_vars {
        return Err(Error::DimensionMismatch {
            what: "solution length",
            expected: instance.program.n_vars,
            got: sol.point.len(),
        });
    }
    let slacks = instance.program.slacks(&sol.point);
    let min_slack = slacks.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min);
    let (lambda_star, _, p_raw) = instance.unpack(&sol.point);
    let simplex_residual = (p_raw.sum() - 1.0).abs();
    let min_weight = p_raw.min();

    let mut notes = Vec::new();
    let p = distribution_as::<T>(&sol.p_star);
    let lambda_max_pu = match p.as_ref().map_err(Clone::clone).and_then(|p| bounds_for_epsilon(model, pool, p, n_s, instance.eps)) {
        Ok((upper, _)) => Some(max_eigenvalue(&upper.p).as_f64()),
        Err(e) => {
            notes.push(format!("P_U unavailable: {e}"));
            None
        }
    };
    let gap = lambda_max_pu.map(|l| (1.0 / lambda_star - l).abs());
    let relative_gap = gap.zip(lambda_max_pu).map(|(g, l)| g / l);
    let rho_min = match p.and_then(|p| rho_min(pool, &p)) {
        Ok(r) => Some(r.as_f64()),
        Err(e) => {
            notes.push(format!("rho_min unavailable: {e}"));
            None
        }
    };
    Ok(VerificationReport {
        rho,
        eps: instance.eps,
        min_slack,
        slacks,
        simplex_residual,
        min_weight,
        lambda_star,
        lambda_max_pu,
        gap,
        relative_gap,
        rho_ok: rho_min.is_some_and(|r| r <= rho + RHO_AUDIT_SLACK),
        rho_min,
        notes,
    })
}

/// CSV with columns `rho,lambda_max_PU,status`.
pub fn rho_trace_csv(trace: &[RhoTracePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rho", "lambda_max_PU", "status"])?;
    for t in trace {
        w.write_record([
            t.rho.to_string(),
            t.lambda_max_pu.map(|v| v.to_string()).unwrap_or_default(),
            t.status.as_str().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
