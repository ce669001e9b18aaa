//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ipdfp_core::solver::{Algorithm, DualUpdateRule, DEFAULT_THETA};

use crate::error::{CliError, Result};
use crate::pgm::PgmFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Denoise,
    Logreg,
    Validate,
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "denoise" => Ok(Task::Denoise),
            "logreg" => Ok(Task::Logreg),
            "validate" => Ok(Task::Validate),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Denoise => "denoise",
            Task::Logreg => "logreg",
            Task::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricKind {
    #[default]
    Scalar,
    Diagonal,
}

impl FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scalar" => Ok(MetricKind::Scalar),
            "diagonal" => Ok(MetricKind::Diagonal),
            other => Err(format!("expected `scalar` or `diagonal`, got `{other}`")),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::Scalar => "scalar",
            MetricKind::Diagonal => "diagonal",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub algorithm: Algorithm,
    pub metric: MetricKind,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    /// Exponent of the diagonal preconditioner, in `[0, 2]`.
    pub s: f64,
    pub alpha: f64,
    pub theta: f64,
    pub delta_hat: Option<f64>,
    pub rho: Option<f64>,
    pub rule: DualUpdateRule,
    pub max_iter: usize,
    pub tol: f64,
    pub record_every: usize,
    pub timing: bool,
    pub lambda_tv: f64,
    pub isotropic: bool,
    pub box_lo: Option<f64>,
    pub box_hi: Option<f64>,
    pub pgm_format: PgmFormat,
    pub lambda_l1: f64,
    pub batches: usize,
    pub features: Option<usize>,
    /// Operator norms for `validate` when no input problem is given.
    pub norms: Option<Vec<f64>>,
}

pub const KEYS: &[&str] = &[
    "task",
    "input",
    "out",
    "algorithm",
    "metric",
    "sigma",
    "gamma",
    "tau",
    "s",
    "alpha",
    "theta",
    "delta_hat",
    "rho",
    "rule",
    "max_iter",
    "tol",
    "record_every",
    "timing",
    "lambda_tv",
    "isotropic",
    "box_lo",
    "box_hi",
    "pgm_format",
    "lambda_l1",
    "batches",
    "features",
    "norms",
];

impl RunConfig {
    pub fn new(task: Task) -> Self {
        RunConfig {
            task,
            input: None,
            out: None,
            algorithm: Algorithm::default(),
            metric: MetricKind::default(),
            sigma: None,
            gamma: None,
            tau: None,
            s: 1.0,
            alpha: 0.0,
            theta: DEFAULT_THETA,
            delta_hat: None,
            rho: None,
            rule: DualUpdateRule::default(),
            max_iter: 10_000,
            tol: 1e-10,
            record_every: 1,
            timing: false,
            lambda_tv: 1.0,
            isotropic: false,
            box_lo: None,
            box_hi: None,
            pgm_format: PgmFormat::default(),
            lambda_l1: 0.01,
            batches: 1,
            features: None,
            norms: None,
        }
    }

    /// Set one key from its textual value. Relative paths are joined onto `base`.
    pub fn apply(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let value = value.trim();
        let err = |msg: String| CliError::Config(format!("{key}: {msg}"));
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        match key {
            "task" => {
                let t: Task = value.parse().map_err(err)?;
                if t != self.task {
                    return Err(err(format!("config is for `{t}`, command is `{}`", self.task)));
                }
            }
            "input" => self.input = Some(path(value)),
            "out" => self.out = Some(path(value)),
            "algorithm" => self.algorithm = value.parse().map_err(|e: ipdfp_core::Error| err(e.to_string()))?,
            "metric" => self.metric = value.parse().map_err(err)?,
            "sigma" => self.sigma = Some(num(value).map_err(err)?),
            "gamma" => self.gamma = Some(num(value).map_err(err)?),
            "tau" => self.tau = Some(num(value).map_err(err)?),
            "s" => self.s = num(value).map_err(err)?,
            "alpha" => self.alpha = num(value).map_err(err)?,
            "theta" => self.theta = num(value).map_err(err)?,
            "delta_hat" => self.delta_hat = Some(num(value).map_err(err)?),
            "rho" => self.rho = Some(num(value).map_err(err)?),
            "rule" => self.rule = value.parse().map_err(|e: ipdfp_core::Error| err(e.to_string()))?,
            "max_iter" => self.max_iter = int(value).map_err(err)?,
            "tol" => self.tol = num(value).map_err(err)?,
            "record_every" => self.record_every = int(value).map_err(err)?,
            "timing" => self.timing = boolean(value).map_err(err)?,
            "lambda_tv" => self.lambda_tv = num(value).map_err(err)?,
            "isotropic" => self.isotropic = boolean(value).map_err(err)?,
            "box_lo" => self.box_lo = Some(num(value).map_err(err)?),
            "box_hi" => self.box_hi = Some(num(value).map_err(err)?),
            "pgm_format" => self.pgm_format = value.parse().map_err(err)?,
            "lambda_l1" => self.lambda_l1 = num(value).map_err(err)?,
            "batches" => self.batches = int(value).map_err(err)?,
            "features" => self.features = Some(int(value).map_err(err)?),
            "norms" => {
                self.norms = Some(
                    value
                        .split(',')
                        .map(|t| num(t.trim()))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(err)?,
                )
            }
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Apply every line of a config file.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        let base = source.parent();
        let mut seen = std::collections::HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Config(format!("{}:{}: {msg}", source.display(), no + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got `{line}`")))?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            self.apply(key, value, base).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Range checks that do not need the problem.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..=2.0).contains(&self.s) {
            return bad(format!("s must lie in [0, 2], got {}", self.s));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 || self.record_every == 0 || self.batches == 0 {
            return bad("max_iter, record_every and batches must be at least 1".into());
        }
        if self.metric == MetricKind::Diagonal
            && (self.sigma.is_some() || self.gamma.is_some() || self.tau.is_some())
        {
            return bad("sigma, gamma and tau only apply to the scalar metric".into());
        }
        if self.task != Task::Validate {
            if self.input.is_none() {
                return bad(format!("{} needs an input file", self.task));
            }
            if self.out.is_none() {
                return bad(format!("{} needs an output directory", self.task));
            }
        }
        Ok(())
    }
}

fn num(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("expected a finite number, got `{v}`"))
}

fn int(v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}
