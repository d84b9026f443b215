//! Flat JSON configuration, layered as defaults ← file ← command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use precnorm::geometry::SpectralBackend;
use precnorm::optim::{HyperParams, OptimizerKind, StepMode};
use precnorm::polar::{PolarSchedule, DEFAULT_QUINTIC};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEEDS: [u64; 3] = [18, 52, 812];

/// Comma-separated on the command line; a list or a string in JSON.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ListValue<T> {
    Many(Vec<T>),
    Text(String),
    One(T),
}

impl<T: FromStr> ListValue<T> {
    fn into_vec(self, key: &str) -> CliResult<Vec<T>> {
        match self {
            Self::One(v) => Ok(vec![v]),
            Self::Many(v) => Ok(v),
            Self::Text(s) => parse_list(&s).map_err(|e| CliError::config(format!("{key}: {e}"))),
        }
    }
}

impl<T: FromStr> FromStr for ListValue<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_list::<T>(s)?;
        Ok(Self::Text(s.to_string()))
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|_| format!("cannot parse `{p}`")))
        .collect()
}

/// Quintic coefficient triples: `a,b,c;a,b,c` on the command line,
/// `[[a,b,c], ...]` in JSON.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Triples(Vec<[f64; 3]>),
    Text(String),
}

impl Coefficients {
    fn triples(self) -> CliResult<Vec<(f64, f64, f64)>> {
        let raw = match self {
            Self::Triples(t) => t,
            Self::Text(s) => s
                .split(';')
                .map(|t| match parse_list::<f64>(t)?.as_slice() {
                    &[a, b, c] => Ok([a, b, c]),
                    _ => Err(format!("`{t}` is not an a,b,c triple")),
                })
                .collect::<Result<_, String>>()
                .map_err(|e| CliError::config(format!("quintic_coefficients: {e}")))?,
        };
        Ok(raw.into_iter().map(|[a, b, c]| (a, b, c)).collect())
    }
}

impl FromStr for Coefficients {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let c = Self::Text(s.to_string());
        c.clone().triples().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

/// Every configurable key. The same struct is read from JSON and from
/// flags; a flag wins over the file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// quadratic or mlp
    #[arg(long)]
    pub task: Option<String>,
    /// LIBSVM file; the seeded Gaussian blobs are used when absent
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// One or more optimizer names, comma separated
    #[arg(long)]
    pub optimizer: Option<ListValue<String>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Comma-separated seeds
    #[arg(long)]
    pub seed: Option<ListValue<u64>>,
    /// Feature scaling bound: e_i = exp(U[-k, k])
    #[arg(long)]
    pub scale_k: Option<f64>,
    /// lmo or classic
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub rms_scaling: Option<bool>,
    /// Spectral LMO backend: quintic, cubic or svd
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub cubic_iters: Option<usize>,
    /// a,b,c;a,b,c ...
    #[arg(long)]
    pub quintic_coefficients: Option<Coefficients>,
    #[arg(long)]
    pub refresh_every: Option<u64>,
    #[arg(long)]
    pub muon_momentum: Option<bool>,
    /// Learning rates for `sweep`
    #[arg(long)]
    pub lr_grid: Option<ListValue<f64>>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Gap bound for the invariance verdict
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed of the bundled synthetic dataset
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub blobs_samples: Option<usize>,
    #[arg(long)]
    pub blobs_features: Option<usize>,
    #[arg(long)]
    pub blobs_separation: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Settings {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Settings) -> Self {
        overlay!(
            self, top, task, dataset, optimizer, lr, steps, seed, scale_k, mode, out, hidden, beta1, beta2,
            epsilon, weight_decay, rho, rms_scaling, backend, cubic_iters, quintic_coefficients, refresh_every,
            muon_momentum, lr_grid, train_frac, val_frac, tolerance, data_seed, blobs_samples, blobs_features,
            blobs_separation,
        );
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Quadratic,
    Mlp,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Quadratic => "quadratic",
            Task::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Quintic,
    Cubic,
    Svd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Invariance,
    Sweep,
    SelfCheck,
}

/// A fully resolved, validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: Option<PathBuf>,
    #[serde(serialize_with = "names")]
    pub optimizer: Vec<OptimizerKind>,
    pub lr: f64,
    pub steps: u64,
    pub seed: Vec<u64>,
    pub scale_k: f64,
    #[serde(serialize_with = "mode_name")]
    pub mode: StepMode,
    pub out: PathBuf,
    pub hidden: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub rms_scaling: bool,
    pub backend: Backend,
    pub cubic_iters: usize,
    pub quintic_coefficients: Vec<(f64, f64, f64)>,
    pub refresh_every: u64,
    pub muon_momentum: bool,
    pub lr_grid: Vec<f64>,
    pub train_frac: f64,
    pub val_frac: f64,
    pub tolerance: f64,
    pub data_seed: u64,
    pub blobs_samples: usize,
    pub blobs_features: usize,
    pub blobs_separation: f64,
}

fn names<S: serde::Serializer>(kinds: &[OptimizerKind], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(kinds.iter().map(|k| k.name()))
}

fn mode_name<S: serde::Serializer>(mode: &StepMode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match mode {
        StepMode::LmoNormalized => "lmo",
        StepMode::Classic => "classic",
    })
}

/// Ten log-spaced learning rates covering [1e-6, 5], rounded to three
/// significant digits.
pub fn default_lr_grid() -> Vec<f64> {
    let (lo, hi) = (1e-6f64.ln(), 5f64.ln());
    (0..10)
        .map(|i| {
            let lr = (lo + (hi - lo) * i as f64 / 9.0).exp();
            format!("{lr:.2e}").parse().expect("formatted float")
        })
        .collect()
}

fn positive(key: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("{key} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn resolve(s: Settings, command: Command) -> CliResult<Self> {
        let task = match s.task.as_deref().unwrap_or("mlp") {
            "mlp" => Task::Mlp,
            "quadratic" => Task::Quadratic,
            other => return Err(CliError::config(format!("unknown task `{other}` (expected quadratic or mlp)"))),
        };
        let optimizer = match s.optimizer {
            Some(list) => list
                .into_vec("optimizer")?
                .iter()
                .map(|n| n.parse::<OptimizerKind>().map_err(|e| CliError::config(e.to_string())))
                .collect::<CliResult<Vec<_>>>()?,
            None => vec![OptimizerKind::AdamSania],
        };
        if optimizer.is_empty() {
            return Err(CliError::config("no optimizer given"));
        }
        let seed = match s.seed {
            Some(list) => list.into_vec("seed")?,
            None => DEFAULT_SEEDS.to_vec(),
        };
        if seed.is_empty() {
            return Err(CliError::config("seed list is empty"));
        }
        let mode = s
            .mode
            .as_deref()
            .unwrap_or("lmo")
            .parse::<StepMode>()
            .map_err(|e| CliError::config(e.to_string()))?;
        let backend = match s.backend.as_deref().unwrap_or("quintic") {
            "quintic" => Backend::Quintic,
            "cubic" => Backend::Cubic,
            "svd" => Backend::Svd,
            other => return Err(CliError::config(format!("unknown backend `{other}` (expected quintic, cubic or svd)"))),
        };
        let quintic_coefficients = match s.quintic_coefficients {
            Some(c) => c.triples()?,
            None => vec![DEFAULT_QUINTIC; 5],
        };
        if quintic_coefficients.is_empty() {
            return Err(CliError::config("quintic_coefficients is empty"));
        }
        let lr_grid = match s.lr_grid {
            Some(g) => g.into_vec("lr_grid")?,
            None => default_lr_grid(),
        };
        if command == Command::Sweep && lr_grid.is_empty() {
            return Err(CliError::config("lr_grid is empty"));
        }
        for &lr in &lr_grid {
            positive("lr_grid entries", lr)?;
        }

        let invariance = command == Command::Invariance;
        let cfg = Self {
            task,
            dataset: s.dataset,
            optimizer,
            lr: positive("lr", s.lr.unwrap_or(1e-3))?,
            steps: s.steps.unwrap_or(200),
            seed,
            scale_k: s.scale_k.unwrap_or(if invariance { 10.0 } else { 0.0 }),
            mode,
            out: s.out.unwrap_or_else(|| PathBuf::from("out")),
            hidden: s.hidden.unwrap_or(100),
            beta1: s.beta1.unwrap_or(0.9),
            beta2: s.beta2.unwrap_or(0.999),
            epsilon: s.epsilon.unwrap_or(if invariance { 1e-40 } else { 1e-8 }),
            weight_decay: s.weight_decay.unwrap_or(0.0),
            rho: positive("rho", s.rho.unwrap_or(1.0))?,
            rms_scaling: s.rms_scaling.unwrap_or(false),
            backend,
            cubic_iters: s.cubic_iters.unwrap_or(30),
            quintic_coefficients,
            refresh_every: s.refresh_every.unwrap_or(10),
            muon_momentum: s.muon_momentum.unwrap_or(true),
            lr_grid,
            train_frac: s.train_frac.unwrap_or(0.6),
            val_frac: s.val_frac.unwrap_or(0.2),
            tolerance: s.tolerance.unwrap_or(1e-6),
            data_seed: s.data_seed.unwrap_or(7),
            blobs_samples: s.blobs_samples.unwrap_or(400),
            blobs_features: s.blobs_features.unwrap_or(16),
            blobs_separation: s.blobs_separation.unwrap_or(2.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if self.steps == 0 {
            return Err(CliError::config("steps must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(CliError::config("hidden must be >= 1"));
        }
        if !(self.scale_k >= 0.0 && self.scale_k.is_finite()) {
            return Err(CliError::config(format!("scale_k must be >= 0, got {}", self.scale_k)));
        }
        if !(self.train_frac > 0.0 && self.val_frac >= 0.0 && self.train_frac + self.val_frac < 1.0) {
            return Err(CliError::config(format!(
                "split fractions {}/{} leave no test part",
                self.train_frac, self.val_frac
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(CliError::config("tolerance must be >= 0"));
        }
        if self.cubic_iters == 0 {
            return Err(CliError::config("cubic_iters must be >= 1"));
        }
        if let Some(p) = &self.dataset {
            if !p.is_file() {
                return Err(CliError::config(format!("dataset `{}` does not exist", p.display())));
            }
        }
        self.hyper_params(self.lr, self.optimizer[0])
            .validate()
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn polar_schedule(&self) -> Option<PolarSchedule> {
        match self.backend {
            Backend::Quintic => Some(PolarSchedule::quintic(self.quintic_coefficients.clone())),
            Backend::Cubic => Some(PolarSchedule::cubic(self.cubic_iters)),
            Backend::Svd => None,
        }
    }

    pub fn hyper_params(&self, lr: f64, kind: OptimizerKind) -> HyperParams {
        HyperParams {
            gamma: lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            p: kind.diag_exponent().unwrap_or(0.5),
            rho: self.rho,
            weight_decay: self.weight_decay,
            mode: self.mode,
            spectral_backend: match self.polar_schedule() {
                Some(s) => SpectralBackend::NewtonSchulz(s),
                None => SpectralBackend::ExactSvd,
            },
            rms_scaling: self.rms_scaling,
            muon_momentum: self.muon_momentum,
            refresh_every: self.refresh_every,
            ..HyperParams::default()
        }
    }
}
