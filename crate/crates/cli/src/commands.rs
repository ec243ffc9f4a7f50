//! The five experiment commands. Each returns the files it wrote and a short
//! human-readable summary.

use std::path::PathBuf;

use covsel::bounds::bound_pair;
use covsel::concentration::rho_min;
use covsel::model::{PoolDocument, SamplingDistribution, SensorPool, SystemModel};
use covsel::optimizer::{
    evaluate_rho_grid, optimize_for_rho, rho_trace_csv, search_rho, verify_solution,
    PointStatus, RhoEvaluation, RhoTracePoint, SdpSolutionReport, VerificationReport,
};
use covsel::policies::{greedy_with_replacement, monte_carlo, uniform_distribution};
use covsel::riccati::is_observable;
use covsel::Error;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{ExperimentConfig, Policy, RhoSpec, SystemSource};
use crate::error::{CliError, CliResult};
use crate::output::{stamp_csv, write_atomic};

pub struct Report {
    pub written: Vec<PathBuf>,
    pub summary: Vec<String>,
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::Core(Error::from(e));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Core(Error::Io(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn gen(config: &ExperimentConfig) -> CliResult<Report> {
    if !matches!(config.system, SystemSource::Synthetic(_)) {
        return Err(CliError::Config("gen needs a synthetic system spec".into()));
    }
    let (model, pool) = config.system()?;
    let path = config.output_path(&config.output.pool);
    write_atomic(&path, &(PoolDocument::from_parts(&model, &pool).to_json()? + "\n"))?;

    let blind: Vec<usize> = pool
        .sensors()
        .iter()
        .enumerate()
        .filter(|(_, s)| !is_observable(model.a(), &DMatrix::from_row_slice(1, s.dim(), s.c().as_slice())))
        .map(|(j, _)| j)
        .collect();
    let mut summary = vec![format!(
        "observability audit: (A, c_j) observable for {} of {} sensors",
        pool.len() - blind.len(),
        pool.len()
    )];
    if !blind.is_empty() {
        summary.push(format!("unobservable sensors: {blind:?}"));
    }
    Ok(Report {
        written: vec![path],
        summary,
    })
}

/// The distribution minimizing `λ_max(P_U)` under the configured `ρ` policy:
/// a search, a fixed value, or the best point of an explicit grid.
struct Optimum {
    rho: f64,
    eval: RhoEvaluation,
    trace: Vec<RhoTracePoint>,
}

fn optimum(config: &ExperimentConfig, model: &SystemModel, pool: &SensorPool, n_s: usize) -> covsel::Result<Optimum> {
    let (delta, eta) = (config.delta, config.eta);
    match &config.rho {
        RhoSpec::Search { search } => {
            let r = search_rho(model, pool, n_s, delta, eta, search.gamma, search.grid_points)?;
            Ok(Optimum {
                rho: r.rho_star,
                eval: r.best,
                trace: r.trace,
            })
        }
        RhoSpec::Value(rho) => Ok(Optimum {
            rho: *rho,
            eval: optimize_for_rho(model, pool, n_s, delta, *rho, eta)?,
            trace: Vec::new(),
        }),
        RhoSpec::Grid(grid) => {
            let mut best: Option<(f64, RhoEvaluation)> = None;
            for &rho in grid {
                if let Ok(e) = optimize_for_rho(model, pool, n_s, delta, rho, eta) {
                    if best.as_ref().is_none_or(|(_, b)| e.lambda_max_pu < b.lambda_max_pu) {
                        best = Some((rho, e));
                    }
                }
            }
            let (rho, eval) = best.ok_or(Error::AllInfeasible)?;
            Ok(Optimum {
                rho,
                eval,
                trace: Vec::new(),
            })
        }
    }
}

pub fn sweep_rho(config: &ExperimentConfig, reproducible: bool) -> CliResult<Report> {
    let n_s = config.single_n_s("sweep-rho")?;
    let (model, pool) = config.system()?;
    let trace = match &config.rho {
        RhoSpec::Value(rho) => evaluate_rho_grid(&model, &pool, n_s, config.delta, &[*rho], config.eta),
        RhoSpec::Grid(g) => evaluate_rho_grid(&model, &pool, n_s, config.delta, g, config.eta),
        RhoSpec::Search { search } => {
            let r = search_rho(&model, &pool, n_s, config.delta, config.eta, search.gamma, search.grid_points)?;
            let mut trace = r.trace;
            trace.push(RhoTracePoint {
                rho: r.rho_star,
                lambda_max_pu: Some(r.lambda_max_pu),
                status: PointStatus::Optimal,
            });
            trace
        }
    };
    if trace.iter().all(|t| t.status == PointStatus::Infeasible) {
        return Err(Error::AllInfeasible.into());
    }
    if !trace.iter().any(|t| matches!(t.status, PointStatus::Feasible | PointStatus::Optimal)) {
        return Err(Error::Numerical("no rho on the grid could be solved".into()).into());
    }
    let feasible = trace.iter().filter(|t| t.status == PointStatus::Feasible).count();
    let optimal = trace.iter().find(|t| t.status == PointStatus::Optimal).copied();
    let path = config.output_path(&config.output.sweep_rho);
    write_atomic(&path, &stamp_csv(rho_trace_csv(&trace)?, reproducible))?;
    let evaluated = trace.len() - usize::from(optimal.is_some());
    let mut summary = vec![format!("n_s = {n_s}: {feasible} of {evaluated} points feasible")];
    if let Some(o) = optimal {
        summary.push(format!("optimum rho* = {}, lambda_max(P_U) = {}", o.rho, cell(o.lambda_max_pu)));
    }
    Ok(Report {
        written: vec![path],
        summary,
    })
}

#[derive(Serialize)]
struct OptimizeReport {
    n_s: usize,
    delta: f64,
    rho_star: f64,
    p_star: Vec<f64>,
    #[serde(rename = "lambda_max_PU")]
    lambda_max_pu: f64,
    support_size: usize,
    verification: VerificationReport,
    solution: SdpSolutionReport,
    rho_trace: Vec<RhoTracePoint>,
}

/// Weights below this count as outside the support in the summary.
const SUPPORT_THRESHOLD: f64 = 1e-4;

pub fn optimize(config: &ExperimentConfig, reproducible: bool) -> CliResult<Report> {
    let n_s = config.single_n_s("optimize")?;
    let (model, pool) = config.system()?;
    let best = optimum(config, &model, &pool, n_s)?;
    let solution = &best.eval.solution;
    let verification = verify_solution(&model, &pool, n_s, config.delta, best.rho, solution)?;
    let p_star: Vec<f64> = solution.p_star.weights().iter().copied().collect();
    let support_size = solution.p_star.support_size(SUPPORT_THRESHOLD);
    let report = OptimizeReport {
        n_s,
        delta: config.delta,
        rho_star: best.rho,
        p_star: p_star.clone(),
        lambda_max_pu: best.eval.lambda_max_pu,
        support_size,
        verification,
        solution: solution.report(),
        rho_trace: best.trace,
    };
    let json_path = config.output_path(&config.output.optimize);
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    write_atomic(&json_path, &json)?;

    let rows: Vec<Vec<String>> = p_star.iter().enumerate().map(|(j, w)| vec![j.to_string(), w.to_string()]).collect();
    let csv_path = config.output_path(&config.output.p_star);
    write_atomic(&csv_path, &stamp_csv(csv_string(&["sensor_index", "weight"], &rows)?, reproducible))?;

    Ok(Report {
        written: vec![json_path, csv_path],
        summary: vec![
            format!(
                "n_s = {n_s}: rho* = {}, lambda_max(P_U) = {}, 1/lambda* = {}",
                report.rho_star,
                report.lambda_max_pu,
                1.0 / solution.lambda_star
            ),
            format!("{support_size} of {} sensors carry weight above {SUPPORT_THRESHOLD}", pool.len()),
        ],
    })
}

fn fatal(e: Error) -> Option<CliError> {
    let e = CliError::from(e);
    (e.exit_code() == 2).then_some(e)
}

/// `ρ` used for the uniform distribution: `max(1, rho_min(uniform))`.
fn uniform_rho(pool: &SensorPool, uniform: &SamplingDistribution) -> Option<f64> {
    rho_min(pool, uniform).ok().map(|r| r.max(1.0))
}

pub fn sweep_ns(config: &ExperimentConfig, reproducible: bool) -> CliResult<Report> {
    let grid = config.n_s_grid()?;
    let (model, pool) = config.system()?;
    let uniform: SamplingDistribution = uniform_distribution(pool.len())?;
    let rho_u = uniform_rho(&pool, &uniform);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n_s in &grid {
        let uni = match rho_u.map(|rho| bound_pair(&model, &pool, &uniform, n_s, config.delta, rho)) {
            Some(Ok(b)) => Some(b.lambda_max_upper()),
            Some(Err(e)) => match fatal(e) {
                Some(e) => return Err(e),
                None => None,
            },
            None => None,
        };
        let opt = match optimum(config, &model, &pool, n_s) {
            Ok(o) => Some((o.rho, o.eval.lambda_max_pu)),
            Err(e) => match fatal(e) {
                Some(e) => return Err(e),
                None => None,
            },
        };
        rows.push(vec![
            n_s.to_string(),
            "uniform".into(),
            cell(uni),
            uni.is_some().to_string(),
            cell(rho_u),
        ]);
        rows.push(vec![
            n_s.to_string(),
            "optimal".into(),
            cell(opt.map(|o| o.1)),
            opt.is_some().to_string(),
            cell(opt.map(|o| o.0)),
        ]);
        summary.push(format!(
            "n_s = {n_s}: optimal {}, uniform {}",
            opt.map(|o| o.1.to_string()).unwrap_or_else(|| "infeasible".into()),
            uni.map(|u| u.to_string()).unwrap_or_else(|| "infeasible".into())
        ));
    }
    let path = config.output_path(&config.output.sweep_ns);
    let body = csv_string(&["n_s", "policy", "lambda_max_PU", "feasible", "rho"], &rows)?;
    write_atomic(&path, &stamp_csv(body, reproducible))?;
    Ok(Report {
        written: vec![path],
        summary,
    })
}

pub fn compare(config: &ExperimentConfig, reproducible: bool) -> CliResult<Report> {
    let grid = config.n_s_grid()?;
    if config.policy == Policy::Greedy {
        return Err(CliError::Config(
            "compare samples from the uniform or optimal distribution; the greedy column is always reported".into(),
        ));
    }
    let (model, pool) = config.system()?;
    let max_n = *grid.iter().max().expect("validated nonempty grid");
    let greedy = greedy_with_replacement(&model, &pool, max_n)?;
    let uniform: SamplingDistribution = uniform_distribution(pool.len())?;

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n_s in &grid {
        let target = match config.policy {
            Policy::Optimal => optimum(config, &model, &pool, n_s).map(|o| (o.rho, o.eval.solution.p_star)),
            _ => rho_min(&pool, &uniform).map(|rho| (rho.max(1.0), uniform.clone())),
        };
        let bounds = target.and_then(|(rho, p)| Ok((bound_pair(&model, &pool, &p, n_s, config.delta, rho)?, p)));
        let (pu, pl, mean, std, coverage) = match bounds {
            Ok((b, p)) => {
                let run = monte_carlo(&model, &pool, &p, n_s, config.trials, config.seed, Some(&b))?;
                let solved = run.stats.solved > 0;
                (
                    Some(b.lambda_max_upper()),
                    Some(b.lambda_max_lower()),
                    solved.then_some(run.stats.mean_lambda_max),
                    solved.then_some(run.stats.std_lambda_max),
                    run.stats.coverage,
                )
            }
            Err(e) => match fatal(e) {
                Some(e) => return Err(e),
                None => (None, None, None, None, None),
            },
        };
        let g = greedy.trace[n_s - 1];
        rows.push(vec![
            n_s.to_string(),
            cell(pu),
            cell(pl),
            cell(mean),
            cell(std),
            g.to_string(),
            cell(coverage),
        ]);
        summary.push(format!(
            "n_s = {n_s}: bounds [{}, {}], random mean {}, greedy {g}, coverage {}",
            cell(pl),
            cell(pu),
            cell(mean),
            cell(coverage)
        ));
    }
    let path = config.output_path(&config.output.compare);
    let header = [
        "n_s",
        "lambda_max_PU",
        "lambda_max_PL",
        "mean_lambda_max_PS",
        "std_lambda_max_PS",
        "greedy_lambda_max",
        "coverage",
    ];
    write_atomic(&path, &stamp_csv(csv_string(&header, &rows)?, reproducible))?;
    Ok(Report {
        written: vec![path],
        summary,
    })
}
