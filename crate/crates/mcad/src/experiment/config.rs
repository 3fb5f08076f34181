//! Flat key-value experiment configuration.
//!
//! The config file holds `key = value` lines (`#` starts a comment). Lists
//! are comma separated. Unknown keys are rejected so runs stay auditable;
//! environment variables are never consulted. Every key can be overridden
//! on the command line with `--set key=value`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rank::CandidatePolicy;
use crate::solver::WSolveMode;

/// Which dataset layout to ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Ml100k,
    Ml1m,
}

impl DatasetKind {
    pub fn label(&self) -> &'static str {
        match self {
            DatasetKind::Ml100k => "ml100k",
            DatasetKind::Ml1m => "ml1m",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ml100k" => Ok(DatasetKind::Ml100k),
            "ml1m" => Ok(DatasetKind::Ml1m),
            other => Err(Error::Config(format!(
                "unknown dataset {other:?} (expected ml100k or ml1m)"
            ))),
        }
    }
}

/// Pipeline variants: the two solvers plus the re-ranking baselines on top
/// of the plain matrix-completion solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Mc,
    Mcad,
    McIa,
    McRprv,
}

impl StrategyKind {
    pub fn all() -> [StrategyKind; 4] {
        [
            StrategyKind::Mc,
            StrategyKind::Mcad,
            StrategyKind::McIa,
            StrategyKind::McRprv,
        ]
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Mc => write!(f, "MC"),
            StrategyKind::Mcad => write!(f, "MCAD"),
            StrategyKind::McIa => write!(f, "MC-IA"),
            StrategyKind::McRprv => write!(f, "MC-RPRV"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "MC" => Ok(StrategyKind::Mc),
            "MCAD" => Ok(StrategyKind::Mcad),
            "MC-IA" => Ok(StrategyKind::McIa),
            "MC-RPRV" => Ok(StrategyKind::McRprv),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub folds: usize,
    /// Fold ids to run; empty means all `folds`.
    pub fold_subset: Vec<usize>,
    pub seed: u64,
    pub n_values: Vec<usize>,
    pub lambda_n_grid: Vec<f64>,
    /// lambda_d is swept as `ratio * lambda_n` per grid point.
    pub lambda_ratio_grid: Vec<f64>,
    /// Proxy coupling weight for split solves; `None` selects
    /// `min(lambda_n, 0.3)`, which keeps the iteration inside the budget
    /// at MovieLens scale. Plain MC solves always run undamped.
    pub eta: Option<f64>,
    pub bias_delta: f64,
    pub bias_learning_rate: f64,
    pub bias_epochs: usize,
    pub strategies: Vec<StrategyKind>,
    pub t_r_grid: Vec<f64>,
    pub candidate_policies: Vec<CandidatePolicy>,
    pub relevance_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub w_mode: WSolveMode,
    pub replications: usize,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Ml100k,
            data_dir: PathBuf::from("data/ml-100k"),
            output_dir: PathBuf::from("out"),
            folds: 5,
            fold_subset: Vec::new(),
            seed: 42,
            n_values: vec![5],
            lambda_n_grid: vec![2.0, 5.0, 10.0, 20.0],
            lambda_ratio_grid: vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0],
            eta: None,
            bias_delta: 0.02,
            bias_learning_rate: 0.005,
            bias_epochs: 30,
            strategies: StrategyKind::all().to_vec(),
            t_r_grid: vec![4.8, 4.6, 4.4, 4.2, 4.0, 3.8, 3.6, 3.4],
            candidate_policies: vec![CandidatePolicy::TestOnly, CandidatePolicy::AllUnrated],
            relevance_threshold: 4.0,
            max_iter: 500,
            tol: 1e-7,
            w_mode: WSolveMode::Direct,
            replications: 1,
            jobs: 0,
        }
    }
}

fn parse_list<T, E>(value: &str, what: &str) -> Result<Vec<T>>
where
    T: FromStr<Err = E>,
    E: fmt::Display,
{
    value
        .split(',')
        .map(|tok| tok.trim())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|e| Error::Config(format!("bad {what} entry {tok:?}: {e}")))
        })
        .collect()
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dataset" => self.dataset = value.parse()?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "folds" => self.folds = parse_scalar(value, "folds")?,
            "fold_subset" => {
                self.fold_subset = if value.is_empty() {
                    Vec::new()
                } else {
                    parse_list(value, "fold_subset")?
                }
            }
            "seed" => self.seed = parse_scalar(value, "seed")?,
            "n_values" => self.n_values = parse_list(value, "n_values")?,
            "lambda_n_grid" => self.lambda_n_grid = parse_list(value, "lambda_n_grid")?,
            "lambda_ratio_grid" => {
                self.lambda_ratio_grid = parse_list(value, "lambda_ratio_grid")?
            }
            "eta" => {
                self.eta = if value == "auto" {
                    None
                } else {
                    Some(parse_scalar(value, "eta")?)
                }
            }
            "bias_delta" => self.bias_delta = parse_scalar(value, "bias_delta")?,
            "bias_learning_rate" => {
                self.bias_learning_rate = parse_scalar(value, "bias_learning_rate")?
            }
            "bias_epochs" => self.bias_epochs = parse_scalar(value, "bias_epochs")?,
            "strategies" => {
                let parsed: Vec<StrategyKind> = value
                    .split(',')
                    .map(|tok| tok.parse())
                    .collect::<Result<_>>()?;
                self.strategies = parsed;
            }
            "t_r_grid" => self.t_r_grid = parse_list(value, "t_r_grid")?,
            "candidate_policies" => {
                let parsed: Vec<CandidatePolicy> = value
                    .split(',')
                    .map(|tok| tok.parse())
                    .collect::<Result<_>>()?;
                self.candidate_policies = parsed;
            }
            "relevance_threshold" => {
                self.relevance_threshold = parse_scalar(value, "relevance_threshold")?
            }
            "max_iter" => self.max_iter = parse_scalar(value, "max_iter")?,
            "tol" => self.tol = parse_scalar(value, "tol")?,
            "w_mode" => {
                self.w_mode = match value {
                    "direct" => WSolveMode::Direct,
                    "iterative" => WSolveMode::Iterative,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown w_mode {other:?} (expected direct or iterative)"
                        )))
                    }
                }
            }
            "replications" => self.replications = parse_scalar(value, "replications")?,
            "jobs" => self.jobs = parse_scalar(value, "jobs")?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, lineno + 1, "expected `key = value`")
            })?;
            config
                .set(key, value)
                .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.fold_subset.iter().any(|&f| f >= self.folds) {
            return Err(Error::Config(format!(
                "fold_subset entries must be below folds = {}",
                self.folds
            )));
        }
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n == 0 || n > 50) {
            return Err(Error::Config("n_values must be within 1..=50".into()));
        }
        if self.lambda_n_grid.is_empty() {
            return Err(Error::Config("lambda_n_grid must not be empty".into()));
        }
        if self.lambda_n_grid.iter().any(|&v| v < 0.0 || !v.is_finite())
            || self.lambda_ratio_grid.iter().any(|&v| v < 0.0 || !v.is_finite())
        {
            return Err(Error::Config(
                "lambda_n_grid and lambda_ratio_grid entries must be finite and >= 0".into(),
            ));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must not be empty".into()));
        }
        if self.strategies.contains(&StrategyKind::Mcad) && self.lambda_ratio_grid.is_empty() {
            return Err(Error::Config(
                "lambda_ratio_grid must not be empty when MCAD is requested".into(),
            ));
        }
        if (self.strategies.contains(&StrategyKind::McIa)
            || self.strategies.contains(&StrategyKind::McRprv))
            && self.t_r_grid.is_empty()
        {
            return Err(Error::Config(
                "t_r_grid must not be empty when a re-ranking strategy is requested".into(),
            ));
        }
        if self.candidate_policies.is_empty() {
            return Err(Error::Config("candidate_policies must not be empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical rendering of every result-determining key. Stored beside
    /// run artifacts so a resumed sweep refuses mismatched settings;
    /// paths, jobs, and fold_subset are excluded (they do not change what
    /// a completed cell holds).
    pub fn fingerprint(&self) -> String {
        format!(
            "dataset={}\nseed={}\nfolds={}\nn_values={}\nlambda_n_grid={}\n\
             lambda_ratio_grid={}\neta={}\nbias_delta={}\nbias_learning_rate={}\n\
             bias_epochs={}\nt_r_grid={}\ncandidate_policies={}\n\
             relevance_threshold={}\nmax_iter={}\ntol={}\nw_mode={:?}\nreplications={}\n",
            self.dataset.label(),
            self.seed,
            self.folds,
            join(&self.n_values),
            join(&self.lambda_n_grid),
            join(&self.lambda_ratio_grid),
            self.eta.map(|e| e.to_string()).unwrap_or_else(|| "auto".into()),
            self.bias_delta,
            self.bias_learning_rate,
            self.bias_epochs,
            join(&self.t_r_grid),
            self.candidate_policies
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.relevance_threshold,
            self.max_iter,
            self.tol,
            self.w_mode,
            self.replications,
        )
    }

    /// Fold ids the plan iterates over.
    pub fn active_folds(&self) -> Vec<usize> {
        if self.fold_subset.is_empty() {
            (0..self.folds).collect()
        } else {
            self.fold_subset.clone()
        }
    }

    /// A documented config template with every key at its default.
    pub fn template() -> String {
        let c = ExperimentConfig::default();
        format!(
            "# dataset layout: ml100k (u.data / u.item) or ml1m (ratings.dat / movies.dat)\n\
             dataset = {}\n\
             # directory holding the raw dataset files\n\
             data_dir = {}\n\
             output_dir = {}\n\
             folds = {}\n\
             # fold ids to run; empty = all\n\
             fold_subset =\n\
             seed = {}\n\
             # recommendation list lengths\n\
             n_values = {}\n\
             lambda_n_grid = {}\n\
             # lambda_d = ratio * lambda_n per sweep point\n\
             lambda_ratio_grid = {}\n\
             # proxy coupling weight for split solves; auto = min(lambda_n, 0.3)\n\
             eta = auto\n\
             bias_delta = {}\n\
             bias_learning_rate = {}\n\
             bias_epochs = {}\n\
             strategies = MC,MCAD,MC-IA,MC-RPRV\n\
             t_r_grid = {}\n\
             candidate_policies = test-only,all-unrated\n\
             relevance_threshold = {}\n\
             max_iter = {}\n\
             tol = {:e}\n\
             # W sub-problem: direct or iterative\n\
             w_mode = direct\n\
             replications = {}\n\
             # worker pool size; 0 = one per core\n\
             jobs = {}\n",
            c.dataset.label(),
            c.data_dir.display(),
            c.output_dir.display(),
            c.folds,
            c.seed,
            join(&c.n_values),
            join(&c.lambda_n_grid),
            join(&c.lambda_ratio_grid),
            c.bias_delta,
            c.bias_learning_rate,
            c.bias_epochs,
            join(&c.t_r_grid),
            c.relevance_threshold,
            c.max_iter,
            c.tol,
            c.replications,
            c.jobs,
        )
    }
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_scalar<T, E>(value: &str, what: &str) -> Result<T>
where
    T: FromStr<Err = E>,
    E: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("bad {what} value {value:?}: {e}")))
}
