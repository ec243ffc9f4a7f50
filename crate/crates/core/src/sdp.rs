//! Linear matrix inequality programs and a log-barrier interior-point solver.
//!
//! A program maximizes `cᵀx` subject to
//!
//! * `S_k(x) = M_{map(k)}(x) + O_k ⪰ 0` for every LMI block, where the affine
//!   maps `M` may be shared by many blocks that differ only by a constant,
//! * `aᵢᵀx + bᵢ ≥ 0` for every linear inequality,
//! * `aᵢᵀx + bᵢ = 0` for every equality.
//!
//! [`BarrierSolver`] runs a phase-I program that maximizes a common margin to
//! find a strictly feasible point, then follows the central path of
//! `t·cᵀx + Σ log det S_k + Σ log(aᵢᵀx + bᵢ)` with equality-constrained
//! Newton steps. Blocks sharing a map are aggregated before the Hessian is
//! formed, so a large family of small blocks costs about as much as one.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};

/// `M(x) = C + Σ x_v F_v` with symmetric `C` and `F_v`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    dim: usize,
    constant: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineMap {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn with_constant(mut self, c: DMatrix<f64>) -> Self {
        self.constant = c;
        self
    }

    /// Adds `x_var · f`; repeated variables accumulate.
    pub fn term(mut self, var: usize, f: DMatrix<f64>) -> Self {
        match self.terms.iter_mut().find(|(v, _)| *v == var) {
            Some((_, g)) => *g += f,
            None => self.terms.push((var, f)),
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (v, f) in &self.terms {
            m += f * x[*v];
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub label: String,
    pub map: usize,
    pub offset: Option<DMatrix<f64>>,
}

/// `Σ coeffs + offset`, constrained `≥ 0` or `= 0` depending on where it sits.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub label: String,
    pub coeffs: Vec<(usize, f64)>,
    pub offset: f64,
}

impl LinearConstraint {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v]).sum::<f64>() + self.offset
    }
}

#[derive(Debug, Clone)]
pub struct LmiProgram {
    pub n_vars: usize,
    /// Maximized.
    pub objective: DVector<f64>,
    pub maps: Vec<AffineMap>,
    pub lmis: Vec<LmiConstraint>,
    pub linear: Vec<LinearConstraint>,
    pub equalities: Vec<LinearConstraint>,
    pub initial: Option<DVector<f64>>,
}

/// Minimum eigenvalue (or value, for linear rows) of one constraint.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintSlack {
    pub label: String,
    pub slack: f64,
}

impl LmiProgram {
    pub fn new(n_vars: usize, objective: DVector<f64>) -> Self {
        Self {
            n_vars,
            objective,
            maps: Vec::new(),
            lmis: Vec::new(),
            linear: Vec::new(),
            equalities: Vec::new(),
            initial: None,
        }
    }

    pub fn add_map(&mut self, map: AffineMap) -> usize {
        self.maps.push(map);
        self.maps.len() - 1
    }

    pub fn add_lmi(&mut self, label: impl Into<String>, map: usize, offset: Option<DMatrix<f64>>) {
        self.lmis.push(LmiConstraint {
            label: label.into(),
            map,
            offset,
        });
    }

    pub fn add_linear(&mut self, label: impl Into<String>, coeffs: Vec<(usize, f64)>, offset: f64) {
        self.linear.push(LinearConstraint {
            label: label.into(),
            coeffs,
            offset,
        });
    }

    pub fn add_equality(&mut self, label: impl Into<String>, coeffs: Vec<(usize, f64)>, offset: f64) {
        self.equalities.push(LinearConstraint {
            label: label.into(),
            coeffs,
            offset,
        });
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::DimensionMismatch {
                what: "objective length",
                expected: self.n_vars,
                got: self.objective.len(),
            });
        }
        for m in &self.maps {
            let sym = |f: &DMatrix<f64>| f.nrows() == m.dim && f.ncols() == m.dim && (f - f.transpose()).amax() <= 1e-12 * (1.0 + f.amax());
            if !sym(&m.constant) || m.terms.iter().any(|(v, f)| *v >= self.n_vars || !sym(f)) {
                return Err(Error::Invalid("affine map terms must be symmetric, sized to the map and index existing variables".into()));
            }
        }
        for c in &self.lmis {
            let dim = self
                .maps
                .get(c.map)
                .ok_or_else(|| Error::Invalid(format!("constraint {}: unknown map {}", c.label, c.map)))?
                .dim;
            if c.offset.as_ref().is_some_and(|o| o.nrows() != dim || o.ncols() != dim) {
                return Err(Error::Invalid(format!("constraint {}: offset does not match the map dimension", c.label)));
            }
        }
        for c in self.linear.iter().chain(&self.equalities) {
            if c.coeffs.iter().any(|&(v, _)| v >= self.n_vars) {
                return Err(Error::Invalid(format!("constraint {}: variable index out of range", c.label)));
            }
        }
        if let Some(x) = &self.initial {
            if x.len() != self.n_vars {
                return Err(Error::DimensionMismatch {
                    what: "initial point length",
                    expected: self.n_vars,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn block_value(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let c = &self.lmis[k];
        let mut s = self.maps[c.map].eval(x);
        if let Some(o) = &c.offset {
            s += o;
        }
        s
    }

    /// Slack of every LMI block and linear inequality at `x`.
    pub fn slacks(&self, x: &DVector<f64>) -> Vec<ConstraintSlack> {
        let mut out: Vec<ConstraintSlack> = (0..self.lmis.len())
            .map(|k| {
                let s = self.block_value(k, x);
                let s = (&s + s.transpose()) * 0.5;
                ConstraintSlack {
                    label: self.lmis[k].label.clone(),
                    slack: s.symmetric_eigenvalues().min(),
                }
            })
            .collect();
        out.extend(self.linear.iter().map(|c| ConstraintSlack {
            label: c.label.clone(),
            slack: c.eval(x),
        }));
        out
    }

    /// Largest absolute equality residual at `x`.
    pub fn equality_residual(&self, x: &DVector<f64>) -> f64 {
        self.equalities.iter().map(|c| c.eval(x).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub status: SolverStatus,
    /// Last iterate; strictly feasible whenever `status` is `Optimal`.
    pub x: DVector<f64>,
    pub objective: f64,
    /// Duality-gap bound `ν/t` at the returned point.
    pub gap: f64,
    pub newton_steps: usize,
    pub message: String,
}

/// Port for conic solvers able to handle [`LmiProgram`]s.
pub trait ConicSolver: Sync {
    fn solve(&self, program: &LmiProgram) -> Result<SolverOutcome>;
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierSolver {
    /// Target for `ν/t` relative to `max(1, |cᵀx|)`.
    pub tol: f64,
    /// Weaker target accepted when Newton stalls before `tol` is reached.
    pub stall_tol: f64,
    /// Phase-I margin below which the program is declared infeasible.
    pub feas_tol: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for BarrierSolver {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            stall_tol: 1e-6,
            feas_tol: 1e-9,
            mu: 20.0,
            max_newton: 2000,
        }
    }
}

const PHASE_ONE_BOX: f64 = 1e6;

struct CompiledMap {
    dim: usize,
    vars: Vec<usize>,
    /// Column `j` is `vec(F_{vars[j]})`.
    v: DMatrix<f64>,
    constants: Vec<DMatrix<f64>>,
}

impl CompiledMap {
    fn linear_part(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let xl = DVector::from_iterator(self.vars.len(), self.vars.iter().map(|&v| x[v]));
        let m = &self.v * xl;
        DMatrix::from_column_slice(self.dim, self.dim, m.as_slice())
    }
}

struct Lin {
    coeffs: Vec<(usize, f64)>,
    offset: f64,
}

impl Lin {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v]).sum::<f64>() + self.offset
    }
}

struct Compiled {
    n: usize,
    c: DVector<f64>,
    maps: Vec<CompiledMap>,
    lin: Vec<Lin>,
    eq_a: DMatrix<f64>,
    eq_b: DVector<f64>,
    nu: f64,
}

fn log_det_spd(s: &DMatrix<f64>) -> Option<f64> {
    let ch = Cholesky::new(s.clone())?;
    let l = ch.l_dirty();
    let mut acc = 0.0;
    for i in 0..s.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

impl Compiled {
    fn barrier(&self, x: &DVector<f64>) -> Option<f64> {
        let mut f = 0.0;
        for m in &self.maps {
            let base = m.linear_part(x);
            for c in &m.constants {
                f -= log_det_spd(&(&base + c))?;
            }
        }
        for l in &self.lin {
            let v = l.eval(x);
            if !(v > 0.0) {
                return None;
            }
            f -= v.ln();
        }
        Some(f)
    }

    /// Gradient and Hessian of the barrier at a strictly feasible `x`.
    fn derivatives(&self, x: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let mut g = DVector::zeros(self.n);
        let mut h = DMatrix::zeros(self.n, self.n);
        for m in &self.maps {
            let d = m.dim;
            let base = m.linear_part(x);
            let mut wsum = DVector::zeros(d * d);
            let mut ksum = DMatrix::zeros(d * d, d * d);
            for c in &m.constants {
                let w = Cholesky::new(&base + c)?.inverse();
                let w = (&w + w.transpose()) * 0.5;
                wsum += DVector::from_column_slice(w.as_slice());
                ksum += w.kronecker(&w);
            }
            let vt = m.v.transpose();
            let gl = &vt * wsum;
            let hl = &vt * (ksum * &m.v);
            for (a, &va) in m.vars.iter().enumerate() {
                g[va] -= gl[a];
                for (b, &vb) in m.vars.iter().enumerate() {
                    h[(va, vb)] += hl[(a, b)];
                }
            }
        }
        for l in &self.lin {
            let v = l.eval(x);
            if !(v > 0.0) {
                return None;
            }
            for &(i, ai) in &l.coeffs {
                g[i] -= ai / v;
                for &(j, aj) in &l.coeffs {
                    h[(i, j)] += ai * aj / (v * v);
                }
            }
        }
        Some((g, h))
    }

    fn equality_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.eq_a * x - &self.eq_b
    }

    /// Newton direction for `min g·dx + ½ dxᵀH dx` s.t. `A(x + dx) = b`.
    fn newton_direction(&self, g: &DVector<f64>, h: &DMatrix<f64>, x: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.n;
        let scale = DVector::from_iterator(n, h.diagonal().iter().map(|&d| 1.0 / d.max(1e-300).sqrt()));
        let mut hs = h.clone();
        for i in 0..n {
            for j in 0..n {
                hs[(i, j)] *= scale[i] * scale[j];
            }
        }
        let gs = g.component_mul(&scale);
        let chol = factor_with_regularization(hs)?;
        let hig = chol.solve(&gs);
        let dys = if self.eq_a.nrows() == 0 {
            -hig
        } else {
            let mut a_s = self.eq_a.clone();
            for j in 0..n {
                a_s.column_mut(j).scale_mut(scale[j]);
            }
            let hiat = chol.solve(&a_s.transpose());
            let schur = &a_s * &hiat;
            let rhs = self.equality_residual(x) - &a_s * &hig;
            let nu = Cholesky::new(schur.clone())
                .map(|c| c.solve(&rhs))
                .or_else(|| schur.lu().solve(&rhs))?;
            -(hig + hiat * nu)
        };
        let mut dx = dys.component_mul(&scale);
        if self.eq_a.nrows() > 0 {
            // remove the equality drift left by an ill-conditioned Hessian
            let target = -self.equality_residual(x);
            let miss = &self.eq_a * &dx - target;
            dx -= project_affine(&self.eq_a, &miss, &DVector::zeros(n))?;
        }
        dx.iter().all(|v| v.is_finite()).then_some(dx)
    }
}

fn factor_with_regularization(h: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Some(c);
    }
    let mut reg = 1e-12;
    while reg < 1e-2 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(hr) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

/// Projects `x` onto `{x : Ax = b}`.
fn project_affine(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(x.clone());
    }
    let aat = a * a.transpose();
    let r = a * x - b;
    let y = Cholesky::new(aat.clone()).map(|c| c.solve(&r)).or_else(|| aat.lu().solve(&r))?;
    Some(x - a.transpose() * y)
}

/// `true` when `row` lies in the row space of `a`, i.e. it is constant on
/// the affine set `{x : Ax = b}`.
fn in_row_space(a: &DMatrix<f64>, row: &DVector<f64>) -> bool {
    let scale = row.amax();
    if scale == 0.0 {
        return true;
    }
    if a.nrows() == 0 {
        return false;
    }
    let zero = DVector::zeros(a.nrows());
    match project_affine(a, &zero, row) {
        Some(r) => r.amax() <= 1e-12 * scale,
        None => false,
    }
}

enum Compilation {
    Ready(Compiled),
    /// A constraint that is constant on the equality set is violated.
    Violated(String),
}

fn compile(p: &LmiProgram, x_eq: &DVector<f64>, feas_tol: f64, phase1: bool) -> Compilation {
    let n = p.n_vars + usize::from(phase1);
    let r = p.equalities.len();
    let mut eq_a = DMatrix::zeros(r, n);
    let mut eq_b = DVector::zeros(r);
    for (i, e) in p.equalities.iter().enumerate() {
        for &(v, a) in &e.coeffs {
            eq_a[(i, v)] += a;
        }
        eq_b[i] = -e.offset;
    }
    let eq_orig = eq_a.columns(0, p.n_vars).into_owned();
    let mut nu = 0.0;

    let mut maps = Vec::new();
    for (mi, m) in p.maps.iter().enumerate() {
        let d = m.dim;
        let blocks: Vec<&LmiConstraint> = p.lmis.iter().filter(|c| c.map == mi).collect();
        if blocks.is_empty() {
            continue;
        }
        let constants: Vec<DMatrix<f64>> = blocks
            .iter()
            .map(|c| match &c.offset {
                Some(o) => &m.constant + o,
                None => m.constant.clone(),
            })
            .collect();
        let mut vars: Vec<usize> = m.terms.iter().map(|(v, _)| *v).collect();
        let mut cols: Vec<DVector<f64>> = m.terms.iter().map(|(_, f)| DVector::from_column_slice(f.as_slice())).collect();

        let mut v_full = DMatrix::zeros(d * d, p.n_vars);
        for (var, col) in vars.iter().zip(&cols) {
            v_full.set_column(*var, col);
        }
        let constant_on_set = (0..d * d).all(|row| in_row_space(&eq_orig, &v_full.row(row).transpose()));
        if constant_on_set {
            let base = m.eval(x_eq) - &m.constant;
            for (c, k) in blocks.iter().zip(&constants) {
                let s = &base + k;
                let s = (&s + s.transpose()) * 0.5;
                let tol = feas_tol * (1.0 + s.amax());
                if s.symmetric_eigenvalues().min() < -tol {
                    return Compilation::Violated(c.label.clone());
                }
            }
            continue;
        }
        if phase1 {
            vars.push(p.n_vars);
            cols.push(DVector::from_column_slice(DMatrix::<f64>::identity(d, d).as_slice()));
        }
        let mut v = DMatrix::zeros(d * d, vars.len());
        for (j, c) in cols.iter().enumerate() {
            v.set_column(j, c);
        }
        nu += (d * constants.len()) as f64;
        maps.push(CompiledMap { dim: d, vars, v, constants });
    }

    let mut lin = Vec::new();
    for c in &p.linear {
        let mut row = DVector::zeros(p.n_vars);
        for &(v, a) in &c.coeffs {
            row[v] += a;
        }
        if in_row_space(&eq_orig, &row) {
            if c.eval(x_eq) < -feas_tol * (1.0 + c.offset.abs()) {
                return Compilation::Violated(c.label.clone());
            }
            continue;
        }
        let mut coeffs = c.coeffs.clone();
        if phase1 {
            coeffs.push((p.n_vars, 1.0));
        }
        lin.push(Lin { coeffs, offset: c.offset });
    }
    if phase1 {
        lin.push(Lin {
            coeffs: vec![(p.n_vars, 1.0)],
            offset: 1.0,
        });
        // a wide box keeps the phase-I barrier bounded below
        let radius = PHASE_ONE_BOX * (1.0 + x_eq.amax());
        for (i, &xi) in x_eq.iter().enumerate() {
            lin.push(Lin {
                coeffs: vec![(i, 1.0)],
                offset: radius - xi,
            });
            lin.push(Lin {
                coeffs: vec![(i, -1.0)],
                offset: radius + xi,
            });
        }
    }
    nu += lin.len() as f64;

    let c = if phase1 {
        let mut c = DVector::zeros(n);
        c[p.n_vars] = -1.0;
        c
    } else {
        p.objective.clone()
    };
    Compilation::Ready(Compiled {
        n,
        c,
        maps,
        lin,
        eq_a,
        eq_b,
        nu,
    })
}

enum Centering {
    Centered,
    Stalled,
}

impl BarrierSolver {
    /// Minimizes `−t·cᵀx + φ(x)` from a strictly feasible `x`.
    fn center(&self, prob: &Compiled, t: f64, x: &mut DVector<f64>, steps: &mut usize) -> Centering {
        loop {
            if *steps >= self.max_newton {
                return Centering::Stalled;
            }
            let Some((gb, h)) = prob.derivatives(x) else {
                return Centering::Stalled;
            };
            let g = &gb - &prob.c * t;
            let Some(dx) = prob.newton_direction(&g, &h, x) else {
                return Centering::Stalled;
            };
            *steps += 1;
            let dec2 = -g.dot(&dx);
            if dec2 <= 2e-10 {
                return Centering::Centered;
            }
            let Some(phi0) = prob.barrier(x) else {
                return Centering::Stalled;
            };
            let slope = -t * prob.c.dot(&dx);
            let mut alpha = 1.0;
            loop {
                let xn = &*x + &dx * alpha;
                if let Some(phi) = prob.barrier(&xn) {
                    let diff = alpha * slope + (phi - phi0);
                    if diff <= -0.25 * alpha * dec2 {
                        *x = xn;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return if dec2 <= 1e-6 { Centering::Centered } else { Centering::Stalled };
                }
            }
        }
    }

    fn phase_one(&self, program: &LmiProgram, x_eq: &DVector<f64>, steps: &mut usize) -> std::result::Result<DVector<f64>, SolverOutcome> {
        let prob = match compile(program, x_eq, self.feas_tol, true) {
            Compilation::Ready(p) => p,
            Compilation::Violated(label) => return Err(infeasible(x_eq.clone(), program, 0, format!("{label} is violated on the equality set"))),
        };
        let n = program.n_vars;
        let mut worst: f64 = 0.0;
        for k in 0..program.lmis.len() {
            let s = program.block_value(k, x_eq);
            let s = (&s + s.transpose()) * 0.5;
            worst = worst.max(-s.symmetric_eigenvalues().min());
        }
        for c in &program.linear {
            worst = worst.max(-c.eval(x_eq));
        }
        let mut x = DVector::zeros(n + 1);
        x.rows_mut(0, n).copy_from(x_eq);
        x[n] = worst + 1.0;

        let mut t = 1.0;
        loop {
            let centered = self.center(&prob, t, &mut x, steps);
            let s = x[n];
            let bound = prob.nu / t;
            let candidate = x.rows(0, n).into_owned();
            if s < 0.0 && (-s >= bound || bound < self.feas_tol) {
                return Ok(candidate);
            }
            if s - bound > 0.0 || (bound < self.feas_tol && s >= -self.feas_tol) {
                return Err(infeasible(candidate, program, *steps, format!("largest common margin is {:.3e}", -s)));
            }
            if let Centering::Stalled = centered {
                if s < 0.0 {
                    return Ok(candidate);
                }
                let outcome = SolverOutcome {
                    status: SolverStatus::NumericalTrouble,
                    objective: program.objective.dot(&candidate),
                    x: candidate,
                    gap: f64::INFINITY,
                    newton_steps: *steps,
                    message: format!("phase I stalled at margin {:.3e}", -s),
                };
                return Err(outcome);
            }
            t *= self.mu;
        }
    }
}

fn infeasible(x: DVector<f64>, program: &LmiProgram, steps: usize, message: String) -> SolverOutcome {
    SolverOutcome {
        status: SolverStatus::Infeasible,
        objective: program.objective.dot(&x),
        x,
        gap: f64::INFINITY,
        newton_steps: steps,
        message,
    }
}

impl ConicSolver for BarrierSolver {
    fn solve(&self, program: &LmiProgram) -> Result<SolverOutcome> {
        program.validate()?;
        let mut eq_a = DMatrix::zeros(program.equalities.len(), program.n_vars);
        let mut eq_b = DVector::zeros(program.equalities.len());
        for (i, e) in program.equalities.iter().enumerate() {
            for &(v, a) in &e.coeffs {
                eq_a[(i, v)] += a;
            }
            eq_b[i] = -e.offset;
        }
        let start = program.initial.clone().unwrap_or_else(|| DVector::zeros(program.n_vars));
        let x_eq = project_affine(&eq_a, &eq_b, &start)
            .ok_or_else(|| Error::Invalid("equality constraints are linearly dependent or inconsistent".into()))?;
        if (&eq_a * &x_eq - &eq_b).amax() > 1e-9 * (1.0 + eq_b.amax()) {
            return Err(Error::Invalid("equality constraints are inconsistent".into()));
        }

        let mut steps = 0;
        let mut x = match self.phase_one(program, &x_eq, &mut steps) {
            Ok(x) => x,
            Err(outcome) => return Ok(outcome),
        };
        let prob = match compile(program, &x_eq, self.feas_tol, false) {
            Compilation::Ready(p) => p,
            Compilation::Violated(label) => return Ok(infeasible(x, program, steps, format!("{label} is violated"))),
        };

        let mut t = 1.0;
        let mut last_gap = f64::INFINITY;
        let mut last_x = x.clone();
        loop {
            let centered = self.center(&prob, t, &mut x, &mut steps);
            let obj = prob.c.dot(&x);
            let gap = prob.nu / t;
            let target = self.tol * obj.abs().max(1.0);
            match centered {
                Centering::Centered => {
                    last_gap = gap;
                    last_x = x.clone();
                    if gap <= target {
                        return Ok(SolverOutcome {
                            status: SolverStatus::Optimal,
                            objective: obj,
                            x,
                            gap,
                            newton_steps: steps,
                            message: String::new(),
                        });
                    }
                }
                Centering::Stalled => {
                    let obj = prob.c.dot(&last_x);
                    let ok = last_gap <= self.stall_tol * obj.abs().max(1.0);
                    return Ok(SolverOutcome {
                        status: if ok { SolverStatus::Optimal } else { SolverStatus::NumericalTrouble },
                        objective: obj,
                        x: last_x,
                        gap: last_gap,
                        newton_steps: steps,
                        message: format!("Newton stalled at t = {t:.3e}"),
                    });
                }
            }
            t *= self.mu;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sym2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn linear_program() {
        // max x + y s.t. x ≥ 0, y ≥ 0, x + 2y ≤ 4, 3x + y ≤ 6 → (1.6, 1.2)
        let mut p = LmiProgram::new(2, DVector::from_row_slice(&[1.0, 1.0]));
        p.add_linear("x", vec![(0, 1.0)], 0.0);
        p.add_linear("y", vec![(1, 1.0)], 0.0);
        p.add_linear("c1", vec![(0, -1.0), (1, -2.0)], 4.0);
        p.add_linear("c2", vec![(0, -3.0), (1, -1.0)], 6.0);
        let out = BarrierSolver::default().solve(&p).unwrap();
        assert_eq!(out.status, SolverStatus::Optimal);
        assert_relative_eq!(out.x[0], 1.6, epsilon = 1e-6);
        assert_relative_eq!(out.x[1], 1.2, epsilon = 1e-6);
        assert_relative_eq!(out.objective, 2.8, epsilon = 1e-7);
    }

    #[test]
    fn maximizes_minimum_eigenvalue() {
        // max t s.t. M − tI ⪰ 0 → t = λ_min(M)
        let m = sym2(2.0, 1.0, 3.0);
        let lmin = m.symmetric_eigenvalues().min();
        let mut p = LmiProgram::new(1, DVector::from_element(1, 1.0));
        let map = p.add_map(AffineMap::new(2).with_constant(m).term(0, -DMatrix::identity(2, 2)));
        p.add_lmi("M - tI", map, None);
        let out = BarrierSolver::default().solve(&p).unwrap();
        assert_eq!(out.status, SolverStatus::Optimal);
        assert_relative_eq!(out.objective, lmin, epsilon = 1e-7);
    }

    #[test]
    fn shared_map_with_offsets_and_equality() {
        // max w₁ on the simplex s.t. diag(w₁, w₂) − diag(0.1, 0.3) ⪰ 0 and diag(w₁, w₂) ⪰ 0
        let mut p = LmiProgram::new(2, DVector::from_row_slice(&[1.0, 0.0]));
        let map = p.add_map(
            AffineMap::new(2)
                .term(0, sym2(1.0, 0.0, 0.0))
                .term(1, sym2(0.0, 0.0, 1.0)),
        );
        p.add_lmi("shifted", map, Some(-DMatrix::from_diagonal(&DVector::from_row_slice(&[0.1, 0.3]))));
        p.add_lmi("plain", map, None);
        p.add_equality("sum", vec![(0, 1.0), (1, 1.0)], -1.0);
        let out = BarrierSolver::default().solve(&p).unwrap();
        assert_eq!(out.status, SolverStatus::Optimal);
        assert_relative_eq!(out.x[0], 0.7, epsilon = 1e-6);
        assert!(p.equality_residual(&out.x) < 1e-12, "{}", p.equality_residual(&out.x));
        assert!(p.slacks(&out.x).iter().all(|s| s.slack > -1e-9));
    }

    #[test]
    fn detects_infeasibility() {
        // x ≥ 1 and x ≤ 0
        let mut p = LmiProgram::new(1, DVector::from_element(1, 1.0));
        p.add_linear("lo", vec![(0, 1.0)], -1.0);
        p.add_linear("hi", vec![(0, -1.0)], 0.0);
        assert_eq!(BarrierSolver::default().solve(&p).unwrap().status, SolverStatus::Infeasible);

        // [[x, 1], [1, -x]] ⪰ 0 has no solution
        let mut p = LmiProgram::new(1, DVector::from_element(1, 1.0));
        let map = p.add_map(AffineMap::new(2).with_constant(sym2(0.0, 1.0, 0.0)).term(0, sym2(1.0, 0.0, -1.0)));
        p.add_lmi("indefinite", map, None);
        p.add_linear("box", vec![(0, -1.0)], 10.0);
        assert_eq!(BarrierSolver::default().solve(&p).unwrap().status, SolverStatus::Infeasible);
    }

    #[test]
    fn constant_blocks_on_the_equality_set_are_checked_not_barriered() {
        // x fixed to 1 by the equality; the block (x − 1)·I is identically zero there
        let mut p = LmiProgram::new(2, DVector::from_row_slice(&[0.0, 1.0]));
        let flat = p.add_map(AffineMap::new(2).with_constant(-DMatrix::identity(2, 2)).term(0, DMatrix::identity(2, 2)));
        p.add_lmi("flat", flat, None);
        p.add_linear("y ≤ 2", vec![(1, -1.0)], 2.0);
        p.add_equality("x = 1", vec![(0, 1.0)], -1.0);
        let out = BarrierSolver::default().solve(&p).unwrap();
        assert_eq!(out.status, SolverStatus::Optimal);
        assert_relative_eq!(out.x[1], 2.0, epsilon = 1e-6);

        p.equalities[0].offset = -0.5;
        assert_eq!(BarrierSolver::default().solve(&p).unwrap().status, SolverStatus::Infeasible);
    }

    #[test]
    fn rejects_malformed_programs() {
        let mut p = LmiProgram::new(1, DVector::from_element(2, 1.0));
        assert!(BarrierSolver::default().solve(&p).is_err());
        p.objective = DVector::from_element(1, 1.0);
        let map = p.add_map(AffineMap::new(2).term(3, DMatrix::identity(2, 2)));
        p.add_lmi("bad", map, None);
        assert!(BarrierSolver::default().solve(&p).is_err());
    }
}
