//! Experiment configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use covsel::model::{generate_synthetic_pool, load_pool, PoolDocument, SensorPool, SystemModel};
use covsel::optimizer::{DEFAULT_ETA, DEFAULT_GAMMA, DEFAULT_GRID_POINTS};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub n_s: Option<SampleCount>,
    #[serde(default)]
    pub rho: RhoSpec,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub output: OutputPaths,
    /// Directory relative paths are resolved against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    /// Path to a model/pool JSON document.
    File(PathBuf),
    Inline(PoolDocument),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n_c: usize,
    pub sigma2: f64,
    #[serde(default = "default_q_scale")]
    pub q_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SampleCount {
    One(usize),
    Grid(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Value(f64),
    Grid(Vec<f64>),
    Search { search: SearchSpec },
}

impl Default for RhoSpec {
    fn default() -> Self {
        RhoSpec::Search {
            search: SearchSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Uniform,
    #[default]
    Optimal,
    Greedy,
}

/// Output directory and per-command file names.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub pool: String,
    pub sweep_rho: String,
    pub optimize: String,
    pub p_star: String,
    pub sweep_ns: String,
    pub compare: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            pool: "pool.json".into(),
            sweep_rho: "sweep_rho.csv".into(),
            optimize: "optimize.json".into(),
            p_star: "p_star.csv".into(),
            sweep_ns: "sweep_ns.csv".into(),
            compare: "compare.csv".into(),
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_trials() -> usize {
    100
}

fn default_q_scale() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

/// Flag overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(trials) = overrides.trials {
            config.trials = trials;
        }
        if let Some(out) = &overrides.out {
            config.output.dir = out.clone();
        } else {
            config.output.dir = config.resolve(&config.output.dir);
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(CliError::Config(format!("eta must be a nonnegative number, got {}", self.eta)));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        match &self.n_s {
            Some(SampleCount::Grid(g)) if g.is_empty() => {
                return Err(CliError::Config("the n_s grid must be nonempty".into()))
            }
            Some(SampleCount::One(0)) => return Err(CliError::Config("n_s must be at least 1".into())),
            Some(SampleCount::Grid(g)) if g.contains(&0) => {
                return Err(CliError::Config("every n_s on the grid must be at least 1".into()))
            }
            _ => {}
        }
        match &self.rho {
            RhoSpec::Grid(g) if g.is_empty() => return Err(CliError::Config("the rho grid must be nonempty".into())),
            RhoSpec::Grid(g) if g.iter().any(|r| !(*r >= 1.0)) => {
                return Err(CliError::Config("every rho on the grid must be at least 1".into()))
            }
            RhoSpec::Value(r) if !(*r >= 1.0) => {
                return Err(CliError::Config(format!("rho must be at least 1, got {r}")))
            }
            RhoSpec::Search { search } => {
                if !(search.gamma > 0.0) {
                    return Err(CliError::Config(format!("search gamma must be positive, got {}", search.gamma)));
                }
                if search.grid_points == 0 {
                    return Err(CliError::Config("search grid_points must be at least 1".into()));
                }
            }
            _ => {}
        }
        match &self.system {
            SystemSource::File(p) => {
                let p = self.resolve(p);
                if !p.is_file() {
                    return Err(CliError::Config(format!("system file {} does not exist", p.display())));
                }
            }
            SystemSource::Synthetic(s) => {
                if s.m == 0 {
                    return Err(CliError::Config("synthetic spec: state dimension m must be at least 1".into()));
                }
                if s.n_c == 0 {
                    return Err(CliError::Config("synthetic spec: pool size n_c must be at least 1".into()));
                }
                if !(s.sigma2 > 0.0) || !s.sigma2.is_finite() {
                    return Err(CliError::Config(format!("synthetic spec: sigma2 must be positive, got {}", s.sigma2)));
                }
                if !(s.q_scale > 0.0) || !s.q_scale.is_finite() {
                    return Err(CliError::Config(format!("synthetic spec: q_scale must be positive, got {}", s.q_scale)));
                }
            }
            SystemSource::Inline(_) => {}
        }
        Ok(())
    }

    /// Builds the plant and pool; synthetic systems use the configured seed.
    pub fn system(&self) -> CliResult<(SystemModel, SensorPool)> {
        let parts = match &self.system {
            SystemSource::File(p) => load_pool(&self.resolve(p)),
            SystemSource::Inline(doc) => doc.into_parts(),
            SystemSource::Synthetic(s) => generate_synthetic_pool(s.m, s.n_c, s.sigma2, s.q_scale, self.seed),
        };
        parts.map_err(|e| CliError::Config(format!("system: {e}")))
    }

    /// The `n_s` grid; a scalar becomes a grid of one.
    pub fn n_s_grid(&self) -> CliResult<Vec<usize>> {
        match &self.n_s {
            Some(SampleCount::One(n)) => Ok(vec![*n]),
            Some(SampleCount::Grid(g)) => Ok(g.clone()),
            None => Err(CliError::Config("this command needs n_s".into())),
        }
    }

    pub fn single_n_s(&self, command: &str) -> CliResult<usize> {
        match &self.n_s {
            Some(SampleCount::One(n)) => Ok(*n),
            Some(SampleCount::Grid(g)) if g.len() == 1 => Ok(g[0]),
            Some(SampleCount::Grid(_)) => Err(CliError::Config(format!("{command} needs a single n_s, not a grid"))),
            None => Err(CliError::Config(format!("{command} needs n_s"))),
        }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output.dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<ExperimentConfig> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn defaults_and_variants() {
        let c = parse(r#"{"system": {"synthetic": {"m": 3, "n_c": 10, "sigma2": 0.5}}}"#).unwrap();
        assert_eq!(c.delta, 0.1);
        assert_eq!(c.policy, Policy::Optimal);
        assert!(matches!(c.rho, RhoSpec::Search { .. }));
        assert_eq!(c.output.compare, "compare.csv");

        let c = parse(r#"{"system": {"synthetic": {"m": 2, "n_c": 4, "sigma2": 1}}, "n_s": [10, 20], "rho": [1, 2.5]}"#)
            .unwrap();
        assert_eq!(c.n_s_grid().unwrap(), vec![10, 20]);
        assert!(c.single_n_s("optimize").is_err());
        assert!(matches!(c.rho, RhoSpec::Grid(ref g) if g == &[1.0, 2.5]));

        let c = parse(r#"{"system": {"synthetic": {"m": 2, "n_c": 4, "sigma2": 1}}, "n_s": 7, "rho": {"search": {"gamma": 0.01}}}"#)
            .unwrap();
        assert_eq!(c.single_n_s("optimize").unwrap(), 7);
        assert!(matches!(c.rho, RhoSpec::Search { search } if search.gamma == 0.01 && search.grid_points == DEFAULT_GRID_POINTS));
    }

    #[test]
    fn rejects_invalid_values() {
        let base = r#""system": {"synthetic": {"m": 2, "n_c": 4, "sigma2": 1}}"#;
        for bad in [
            format!("{{{base}, \"delta\": 1.0}}"),
            format!("{{{base}, \"delta\": 0}}"),
            format!("{{{base}, \"n_s\": []}}"),
            format!("{{{base}, \"n_s\": 0}}"),
            format!("{{{base}, \"rho\": []}}"),
            format!("{{{base}, \"rho\": 0.5}}"),
            format!("{{{base}, \"trials\": 0}}"),
            format!("{{{base}, \"policy\": \"random\"}}"),
            format!("{{{base}, \"unknown\": 1}}"),
            r#"{"system": {"synthetic": {"m": 0, "n_c": 4, "sigma2": 1}}}"#.to_string(),
            r#"{"system": {"file": "/definitely/not/here.json"}}"#.to_string(),
        ] {
            assert!(parse(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn zero_state_dimension_names_the_invariant() {
        let err = parse(r#"{"system": {"synthetic": {"m": 0, "n_c": 4, "sigma2": 1}}}"#).unwrap_err();
        assert!(err.to_string().contains("state dimension m"));
    }
}
