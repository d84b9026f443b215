//! Turning a resolved configuration into datasets, objectives and runs.

use precnorm::invariance::{run_pair_with, PairRun, Reparam};
use precnorm::objective::Objective;
use precnorm::optim::OptimizerKind;
use precnorm::par::Execution;
use precnorm::tasks::{
    accuracy, gaussian_blobs, init_mlp_params, parse_libsvm, scale_features, Dataset, MlpLoss, Part, QuadraticLoss,
};
use precnorm::train::{run_trajectory, RunOptions, Trajectory};
use precnorm::{Matrix, Result};

use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, CliResult};

/// The unsplit dataset: a LIBSVM file when configured, else seeded blobs.
pub fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    match &cfg.dataset {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_libsvm(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
        None => gaussian_blobs(cfg.blobs_samples, cfg.blobs_features, cfg.blobs_separation, cfg.data_seed)
            .map_err(|e| CliError::config(e.to_string())),
    }
}

/// Either task behind one [`Objective`].
pub enum TaskLoss {
    Quadratic(QuadraticLoss),
    Mlp(MlpLoss),
}

impl TaskLoss {
    fn inner(&self) -> &dyn Objective {
        match self {
            Self::Quadratic(q) => q,
            Self::Mlp(m) => m,
        }
    }
}

impl Objective for TaskLoss {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.inner().shapes()
    }
    fn loss(&self, params: &[Matrix]) -> Result<f64> {
        self.inner().loss(params)
    }
    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        self.inner().loss_and_grad(params)
    }
    fn metric(&self, params: &[Matrix]) -> Result<Option<f64>> {
        self.inner().metric(params)
    }
}

/// Loss on one part of `d`. The MLP scores the test part as its metric.
pub fn task_loss(cfg: &ExperimentConfig, d: &Dataset, part: Part) -> CliResult<TaskLoss> {
    let (x, y) = d.part(part)?;
    Ok(match cfg.task {
        Task::Quadratic => TaskLoss::Quadratic(QuadraticLoss::new(x, y.to_matrix()?)?),
        Task::Mlp => {
            let mlp = MlpLoss::new(x, &y, cfg.hidden).map_err(|e| CliError::config(e.to_string()))?;
            match d.part(Part::Test) {
                Ok((xt, yt)) if part == Part::Train => TaskLoss::Mlp(mlp.with_eval(xt, &yt)?),
                _ => TaskLoss::Mlp(mlp),
            }
        }
    })
}

pub fn initial_params(cfg: &ExperimentConfig, d: &Dataset, seed: u64) -> CliResult<Vec<Matrix>> {
    let f = d.num_features();
    Ok(match cfg.task {
        Task::Quadratic => vec![Matrix::zeros(f, d.y.to_matrix()?.cols())],
        Task::Mlp => {
            let classes = d
                .num_classes()
                .ok_or_else(|| CliError::config("the mlp task needs class labels"))?;
            init_mlp_params(f, cfg.hidden, classes, seed)
        }
    })
}

/// `W = diag(e)·W'` on the first block, identity elsewhere.
pub fn feature_reparams(shapes: &[(usize, usize)], e: &[f64]) -> CliResult<Vec<Reparam>> {
    let mut out = Vec::with_capacity(shapes.len());
    for (b, &(rows, cols)) in shapes.iter().enumerate() {
        out.push(if b == 0 {
            Reparam::scale(Matrix::from_fn(rows, cols, |i, _| e[i])?)?
        } else {
            Reparam::Identity
        });
    }
    Ok(out)
}

pub fn run_id(kind: OptimizerKind, task: Task, seed: u64, lr: Option<f64>) -> String {
    match lr {
        Some(lr) => format!("{kind}-{task}-lr{lr:e}-s{seed}"),
        None => format!("{kind}-{task}-s{seed}"),
    }
}

/// One seeded trajectory.
pub struct RunResult {
    pub run_id: String,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub lr: f64,
    pub scaled: bool,
    pub trajectory: Trajectory,
    pub val_loss: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

impl RunResult {
    pub fn final_loss(&self) -> f64 {
        self.trajectory.records.last().map_or(self.trajectory.initial_loss, |r| r.loss)
    }

    pub fn diverged(&self) -> bool {
        self.trajectory.diverged_at.is_some()
    }
}

pub struct Prepared {
    pub data: Dataset,
    /// Feature scales when `scale_k > 0`.
    pub scales: Option<Vec<f64>>,
}

/// Splits by `seed` and applies the configured feature scaling.
pub fn prepare(cfg: &ExperimentConfig, base: &Dataset, seed: u64) -> CliResult<Prepared> {
    let data = base
        .clone()
        .with_split(cfg.train_frac, cfg.val_frac, seed)
        .map_err(|e| CliError::config(e.to_string()))?;
    if cfg.scale_k > 0.0 {
        let (scaled, e) = scale_features(&data, cfg.scale_k, seed)?;
        Ok(Prepared {
            data: scaled,
            scales: Some(e),
        })
    } else {
        Ok(Prepared { data, scales: None })
    }
}

pub fn run_one(
    cfg: &ExperimentConfig,
    base: &Dataset,
    kind: OptimizerKind,
    seed: u64,
    lr: f64,
    run_id: String,
) -> CliResult<RunResult> {
    let prep = prepare(cfg, base, seed)?;
    let obj = task_loss(cfg, &prep.data, Part::Train)?;
    let w0 = initial_params(cfg, &prep.data, seed)?;
    let hp = cfg.hyper_params(lr, kind);
    let trajectory = run_trajectory(kind, &obj, w0, &hp, RunOptions::steps(cfg.steps))?;

    let finite = trajectory.diverged_at.is_none();
    let (val_loss, val_accuracy) = if finite && !prep.data.part_indices(Part::Validation).is_empty() {
        let val = task_loss(cfg, &prep.data, Part::Validation)?;
        let loss = val.loss(&trajectory.final_params)?;
        let acc = match cfg.task {
            Task::Mlp => {
                let (x, y) = prep.data.part(Part::Validation)?;
                Some(accuracy(&trajectory.final_params, &x, &y)?)
            }
            Task::Quadratic => None,
        };
        (loss, acc)
    } else if finite {
        (f64::NAN, None)
    } else {
        (f64::INFINITY, (cfg.task == Task::Mlp).then_some(0.0))
    };
    let test_accuracy = trajectory.records.last().and_then(|r| r.metric);
    Ok(RunResult {
        run_id,
        optimizer: kind,
        seed,
        lr,
        scaled: prep.scales.is_some(),
        trajectory,
        val_loss,
        val_accuracy,
        test_accuracy,
    })
}

/// Original data against the same data with scaled features.
pub fn invariance_pair(cfg: &ExperimentConfig, base: &Dataset, kind: OptimizerKind, seed: u64) -> CliResult<PairRun> {
    if cfg.scale_k <= 0.0 {
        return Err(CliError::config("invariance needs scale_k > 0"));
    }
    let data = base
        .clone()
        .with_split(cfg.train_frac, cfg.val_frac, seed)
        .map_err(|e| CliError::config(e.to_string()))?;
    let (scaled, e) = scale_features(&data, cfg.scale_k, seed)?;
    let obj = task_loss(cfg, &data, Part::Train)?;
    let obj_new = task_loss(cfg, &scaled, Part::Train)?;
    let reparams = feature_reparams(&obj.shapes(), &e)?;
    let w0 = initial_params(cfg, &data, seed)?;
    let hp = cfg.hyper_params(cfg.lr, kind);
    Ok(run_pair_with(
        kind,
        &obj,
        &obj_new,
        &reparams,
        w0,
        &hp,
        cfg.steps,
        cfg.tolerance,
        Execution::default(),
    )?)
}
