//! Selection policies and the Monte Carlo engine.
//!
//! * uniform sampling distribution,
//! * i.i.d. categorical sampling of a selection from any distribution,
//! * greedy selection with replacement, which appends the candidate that
//!   minimizes `λ_max` of the resulting steady-state covariance,
//! * Monte Carlo trials of random selections, with optional coverage checks
//!   against a [`BoundSet`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::BoundSet;
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, psd_leq, psd_sqrt, psd_tolerance, symmetrize};
use crate::model::{matrix_to_rows, selection_information, SamplingDistribution, Selection, SensorPool, SystemModel};
use crate::riccati::{finite_horizon, is_detectable, steady_state, RecursionOptions};
use crate::rng::{domain, substream};
use crate::scalar::Scalar;

/// Horizon of the finite-step score used when a candidate pair is undetectable.
pub const FALLBACK_HORIZON: usize = 50;

pub fn uniform_distribution<T: Scalar>(n_c: usize) -> Result<SamplingDistribution<T>> {
    if n_c == 0 {
        return Err(Error::Invalid("n_c must be at least 1".into()));
    }
    SamplingDistribution::new(DVector::from_element(n_c, T::one() / T::of(n_c as f64)))
}

/// `n_s` i.i.d. categorical draws by inverse CDF over the cumulative weights.
/// Zero-weight entries are never drawn.
pub fn sample_selection<T: Scalar, R: Rng + ?Sized>(
    p: &SamplingDistribution<T>,
    n_s: usize,
    rng: &mut R,
) -> Result<Selection> {
    if n_s == 0 {
        return Err(Error::Invalid("n_s must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0f64;
    for w in p.weights().iter() {
        acc += w.as_f64();
        cdf.push(acc);
    }
    let last_positive = p
        .weights()
        .iter()
        .rposition(|&w| w > T::zero())
        .expect("a distribution on the simplex has positive mass");
    let indices = (0..n_s)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u);
            k.min(last_positive)
        })
        .collect();
    Selection::new(indices, p.len())
}

/// Greedy selection and the `λ_max` reached after each appended sensor.
#[derive(Debug, Clone)]
pub struct GreedyResult<T: Scalar = f64> {
    pub selection: Selection,
    pub trace: Vec<T>,
    /// Final covariance (steady state, or the fallback iterate).
    pub p: DMatrix<T>,
}

struct Scored<T: Scalar> {
    score: T,
    p: DMatrix<T>,
    steady: bool,
}

fn score_candidate<T: Scalar>(
    model: &SystemModel<T>,
    y: &DMatrix<T>,
    warm: Option<&DMatrix<T>>,
    known_detectable: bool,
) -> Option<Scored<T>> {
    let detectable = known_detectable || is_detectable(model.a(), &psd_sqrt(y));
    if detectable {
        let mut opts = RecursionOptions::default();
        if let Some(w) = warm {
            opts = opts.with_init(w.clone());
        }
        if let Ok(r) = steady_state(model, y, &opts) {
            return Some(Scored {
                score: max_eigenvalue(&r.p),
                p: r.p,
                steady: true,
            });
        }
    }
    let p = finite_horizon(model, y, model.q(), FALLBACK_HORIZON).ok()?;
    let score = max_eigenvalue(&p);
    score.is_finite().then_some(Scored { score, p, steady: false })
}

/// Greedy selection with replacement.
///
/// Each step scores every candidate `j` by `λ_max` of the steady state for the
/// accumulated information plus `𝒵_j`, warm-started from the current steady
/// state, and appends the minimizer (lowest index on ties). Candidates whose
/// augmented pair is undetectable are scored by `λ_max` after
/// [`FALLBACK_HORIZON`] steps from `P = Q`.
pub fn greedy_with_replacement<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    n_s: usize,
) -> Result<GreedyResult<T>> {
    pool.check_model(model)?;
    if n_s == 0 {
        return Err(Error::Invalid("n_s must be at least 1".into()));
    }
    let m = model.order();
    let mut y = DMatrix::<T>::zeros(m, m);
    let mut current: Option<DMatrix<T>> = None;
    let mut base_detectable = false;
    let mut last = DMatrix::<T>::zeros(m, m);
    let mut chosen = Vec::with_capacity(n_s);
    let mut trace = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let scores: Vec<Option<Scored<T>>> = pool
            .information()
            .par_iter()
            .map(|z| score_candidate(model, &(&y + z), current.as_ref(), base_detectable))
            .collect();
        let mut best: Option<(usize, &Scored<T>)> = None;
        for (j, s) in scores.iter().enumerate() {
            if let Some(s) = s {
                if best.is_none_or(|(_, b)| s.score < b.score) {
                    best = Some((j, s));
                }
            }
        }
        let (j, s) = best.ok_or(Error::NoFeasibleCandidate)?;
        y += &pool.information()[j];
        base_detectable = s.steady;
        current = s.steady.then(|| s.p.clone());
        last = s.p.clone();
        trace.push(s.score);
        chosen.push(j);
    }
    Ok(GreedyResult {
        selection: Selection::new(chosen, pool.len())?,
        trace,
        p: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WithinBounds {
    Yes,
    No,
    Undetectable,
}

impl WithinBounds {
    pub fn as_str(self) -> &'static str {
        match self {
            WithinBounds::Yes => "yes",
            WithinBounds::No => "no",
            WithinBounds::Undetectable => "undetectable",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord<T: Scalar = f64> {
    pub trial: usize,
    pub selection: Selection,
    /// Steady-state covariance, absent when the selection is undetectable or
    /// the recursion failed.
    pub p: Option<DMatrix<T>>,
    pub lambda_max: Option<T>,
    /// Present only when a bound set was supplied.
    pub within_bounds: Option<WithinBounds>,
}

impl<T: Scalar> TrialRecord<T> {
    pub fn detectable(&self) -> bool {
        self.p.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct TrialStats<T: Scalar = f64> {
    pub trials: usize,
    pub solved: usize,
    /// Fraction of solved trials inside `[P_L, P_U]`; `None` without bounds.
    pub coverage: Option<f64>,
    pub mean_lambda_max: T,
    /// Sample standard deviation (zero for a single solved trial).
    pub std_lambda_max: T,
    pub mean_p: DMatrix<T>,
    /// Sample mean of `Σ Z_j` over all trials.
    pub mean_information: DMatrix<T>,
    pub undetectable_count: usize,
}

impl<T: Scalar> TrialStats<T> {
    pub fn report(&self) -> TrialStatsReport {
        TrialStatsReport {
            trials: self.trials,
            solved: self.solved,
            coverage: self.coverage,
            mean_lambda_max: self.mean_lambda_max.as_f64(),
            std_lambda_max: self.std_lambda_max.as_f64(),
            mean_p: matrix_to_rows(&self.mean_p),
            undetectable_count: self.undetectable_count,
        }
    }
}

/// JSON view of [`TrialStats`].
#[derive(Debug, Clone, Serialize)]
pub struct TrialStatsReport {
    pub trials: usize,
    pub solved: usize,
    pub coverage: Option<f64>,
    pub mean_lambda_max: f64,
    pub std_lambda_max: f64,
    #[serde(rename = "mean_P")]
    pub mean_p: Vec<Vec<f64>>,
    pub undetectable_count: usize,
}

#[derive(Debug, Clone)]
pub struct MonteCarloRun<T: Scalar = f64> {
    pub stats: TrialStats<T>,
    pub records: Vec<TrialRecord<T>>,
}

fn run_trial<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    p: &SamplingDistribution<T>,
    n_s: usize,
    seed: u64,
    trial: usize,
    bounds: Option<&BoundSet<T>>,
) -> Result<(TrialRecord<T>, DMatrix<T>)> {
    let mut rng = substream(seed, domain::MONTE_CARLO, trial as u64);
    let selection = sample_selection(p, n_s, &mut rng)?;
    let y = selection_information(pool, &selection)?;
    let solved = if is_detectable(model.a(), &psd_sqrt(&y)) {
        steady_state(model, &y, &RecursionOptions::default()).ok().map(|r| r.p)
    } else {
        None
    };
    let lambda_max = solved.as_ref().map(max_eigenvalue);
    let within_bounds = bounds.map(|b| match &solved {
        Some(ps) => {
            let inside = psd_leq(b.p_lower(), ps, psd_tolerance(b.p_lower(), ps))
                && psd_leq(ps, b.p_upper(), psd_tolerance(ps, b.p_upper()));
            if inside {
                WithinBounds::Yes
            } else {
                WithinBounds::No
            }
        }
        None => WithinBounds::Undetectable,
    });
    Ok((
        TrialRecord {
            trial,
            selection,
            p: solved,
            lambda_max,
            within_bounds,
        },
        y,
    ))
}

/// Runs `trials` independent random selections of size `n_s` from `p`.
/// Trial `k` uses its own RNG substream, so the result does not depend on
/// scheduling. Undetectable trials are recorded and excluded from the
/// eigenvalue statistics and from coverage.
pub fn monte_carlo<T: Scalar>(
    model: &SystemModel<T>,
    pool: &SensorPool<T>,
    p: &SamplingDistribution<T>,
    n_s: usize,
    trials: usize,
    seed: u64,
    bounds: Option<&BoundSet<T>>,
) -> Result<MonteCarloRun<T>> {
    pool.check_model(model)?;
    if trials == 0 {
        return Err(Error::Invalid("trials must be at least 1".into()));
    }
    if p.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            what: "sampling distribution length vs pool size",
            expected: pool.len(),
            got: p.len(),
        });
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|k| run_trial(model, pool, p, n_s, seed, k, bounds))
        .collect::<Result<Vec<_>>>()?;

    let m = model.order();
    let mut mean_information = DMatrix::<T>::zeros(m, m);
    let mut mean_p = DMatrix::<T>::zeros(m, m);
    let mut lambdas = Vec::new();
    let mut records = Vec::with_capacity(trials);
    for (rec, y) in results {
        mean_information += y;
        if let (Some(ps), Some(l)) = (&rec.p, rec.lambda_max) {
            mean_p += ps;
            lambdas.push(l);
        }
        records.push(rec);
    }
    let solved = lambdas.len();
    mean_information /= T::of(trials as f64);
    let (mean_lambda_max, std_lambda_max) = if solved == 0 {
        (T::zero(), T::zero())
    } else {
        mean_p /= T::of(solved as f64);
        let n = T::of(solved as f64);
        let mean = lambdas.iter().fold(T::zero(), |a, &b| a + b) / n;
        let var = if solved > 1 {
            lambdas.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / T::of((solved - 1) as f64)
        } else {
            T::zero()
        };
        (mean, var.sqrt())
    };
    let coverage = bounds.map(|_| {
        let yes = records.iter().filter(|r| r.within_bounds == Some(WithinBounds::Yes)).count();
        if solved == 0 {
            0.0
        } else {
            yes as f64 / solved as f64
        }
    });
    Ok(MonteCarloRun {
        stats: TrialStats {
            trials,
            solved,
            coverage,
            mean_lambda_max,
            std_lambda_max,
            mean_p: symmetrize(&mean_p),
            mean_information,
            undetectable_count: trials - solved,
        },
        records,
    })
}

/// Per-trial CSV with columns `trial,lambda_max,within_bounds,detectable`.
pub fn trials_csv<T: Scalar>(records: &[TrialRecord<T>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "lambda_max", "within_bounds", "detectable"])?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.lambda_max.map(|l| l.as_f64().to_string()).unwrap_or_default(),
            r.within_bounds.map(|b| b.as_str().to_string()).unwrap_or_default(),
            r.detectable().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
