use std::fs;
use std::path::Path;
use std::time::Instant;

use precnorm::invariance::{InvarianceReport, Verdict};
use precnorm::optim::OptimizerKind;
use precnorm::par::{self, Execution};
use precnorm::tasks::Dataset;

use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, CliResult};
use crate::experiment::{invariance_pair, load_dataset, run_id, run_one, RunResult};
use crate::output::{self, BestRow, INVARIANCE_HEADER};
use crate::selfcheck::{run_suites, SuiteOutcome, SUITES};

fn out_dir(cfg: &ExperimentConfig) -> CliResult<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn collect<T>(results: Vec<CliResult<T>>) -> CliResult<Vec<T>> {
    results.into_iter().collect()
}

fn runs(cfg: &ExperimentConfig, base: &Dataset, lrs: &[Option<f64>]) -> CliResult<Vec<RunResult>> {
    let mut jobs = Vec::new();
    for &kind in &cfg.optimizer {
        for &lr in lrs {
            for &seed in &cfg.seed {
                jobs.push((kind, lr, seed));
            }
        }
    }
    collect(par::map(Execution::default(), &jobs, |&(kind, lr, seed)| {
        let id = run_id(kind, cfg.task, seed, lr);
        run_one(cfg, base, kind, seed, lr.unwrap_or(cfg.lr), id)
    }))
}

/// One trajectory per (optimizer, seed): `runs.csv`, `runs.svg`, `meta.json`.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<Vec<RunResult>> {
    let start = Instant::now();
    let dir = out_dir(cfg)?;
    let base = load_dataset(cfg)?;
    let results = runs(cfg, &base, &[None])?;
    output::write_file(&dir.join("runs.csv"), &output::runs_csv(cfg.task, &results)?)?;
    output::write_file(&dir.join("runs.svg"), output::runs_svg(&results).as_bytes())?;
    output::write_meta(dir, "run", cfg, start.elapsed().as_millis())?;
    Ok(results)
}

#[derive(Debug, Clone)]
pub struct InvarianceSummary {
    pub optimizer: OptimizerKind,
    pub per_seed: Vec<(u64, InvarianceReport)>,
}

impl InvarianceSummary {
    pub fn verdict(&self) -> Verdict {
        if self.per_seed.iter().all(|(_, r)| r.verdict == Verdict::Invariant) {
            Verdict::Invariant
        } else {
            Verdict::NotInvariant
        }
    }

    pub fn max_loss_gap(&self) -> f64 {
        self.per_seed.iter().map(|(_, r)| r.max_loss_gap).fold(0.0, f64::max)
    }

    pub fn max_param_gap(&self) -> f64 {
        self.per_seed.iter().map(|(_, r)| r.max_param_gap).fold(0.0, f64::max)
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {:?} max_loss_gap={:e} max_param_gap={:e} seeds={}",
            self.optimizer,
            self.verdict(),
            self.max_loss_gap(),
            self.max_param_gap(),
            self.per_seed.len()
        )
    }
}

/// Original against feature-scaled data for every (optimizer, seed). Writes
/// both trajectories to `runs.csv` and the gaps to `invariance.csv`.
pub fn cmd_invariance(cfg: &ExperimentConfig) -> CliResult<Vec<InvarianceSummary>> {
    let start = Instant::now();
    let dir = out_dir(cfg)?;
    let base = load_dataset(cfg)?;
    let jobs: Vec<(OptimizerKind, u64)> = cfg
        .optimizer
        .iter()
        .flat_map(|&k| cfg.seed.iter().map(move |&s| (k, s)))
        .collect();
    let pairs = collect(par::map(Execution::default(), &jobs, |&(kind, seed)| {
        invariance_pair(cfg, &base, kind, seed)
    }))?;

    let mut trajectories = Vec::new();
    let mut rows = Vec::new();
    let mut summaries: Vec<InvarianceSummary> = Vec::new();
    for (&(kind, seed), pair) in jobs.iter().zip(pairs) {
        for (scaled, t) in [(false, pair.original), (true, pair.transformed)] {
            trajectories.push(RunResult {
                run_id: run_id(kind, cfg.task, seed, None),
                optimizer: kind,
                seed,
                lr: cfg.lr,
                scaled,
                test_accuracy: t.records.last().and_then(|r| r.metric),
                trajectory: t,
                val_loss: f64::NAN,
                val_accuracy: None,
            });
        }
        let r = &pair.report;
        rows.push(vec![
            kind.to_string(),
            seed.to_string(),
            format!("{:?}", r.verdict),
            output::num(r.max_loss_gap),
            output::num(r.max_param_gap),
            r.steps.to_string(),
            r.diverged.to_string(),
            output::num(r.tolerance),
        ]);
        match summaries.iter_mut().find(|s| s.optimizer == kind) {
            Some(s) => s.per_seed.push((seed, pair.report)),
            None => summaries.push(InvarianceSummary {
                optimizer: kind,
                per_seed: vec![(seed, pair.report)],
            }),
        }
    }
    output::write_file(&dir.join("runs.csv"), &output::runs_csv(cfg.task, &trajectories)?)?;
    output::write_file(&dir.join("runs.svg"), output::runs_svg(&trajectories).as_bytes())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::config(format!("csv: {e}"));
    w.write_record(INVARIANCE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(format!("csv: {e}")))?;
    output::write_file(&dir.join("invariance.csv"), &bytes)?;
    output::write_meta(dir, "invariance", cfg, start.elapsed().as_millis())?;
    Ok(summaries)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Per optimizer, the learning rate with the best mean validation score
/// over seeds: highest accuracy for the MLP, lowest loss for the quadratic.
/// Ties go to the lower mean validation loss, then the smaller rate.
pub fn select_best(task: Task, results: &[RunResult]) -> Vec<BestRow> {
    let mut best: Vec<BestRow> = Vec::new();
    let mut optimizers: Vec<OptimizerKind> = Vec::new();
    for r in results {
        if !optimizers.contains(&r.optimizer) {
            optimizers.push(r.optimizer);
        }
    }
    for kind in optimizers {
        let mut lrs: Vec<f64> = Vec::new();
        for r in results.iter().filter(|r| r.optimizer == kind) {
            if !lrs.contains(&r.lr) {
                lrs.push(r.lr);
            }
        }
        let rows = lrs.into_iter().map(|lr| {
            let group: Vec<&RunResult> = results.iter().filter(|r| r.optimizer == kind && r.lr == lr).collect();
            // NaN (no validation part) sorts as worst.
            let val_loss = mean(group.iter().map(|r| r.val_loss));
            BestRow {
                optimizer: kind.to_string(),
                lr,
                mean_val_accuracy: (task == Task::Mlp).then(|| mean(group.iter().map(|r| r.val_accuracy.unwrap_or(0.0)))),
                mean_val_loss: if val_loss.is_nan() { f64::INFINITY } else { val_loss },
                mean_final_train_loss: mean(group.iter().map(|r| r.final_loss())),
                seeds: group.len(),
            }
        });
        let winner = rows.reduce(|a, b| {
            let key = |r: &BestRow| (r.mean_val_accuracy.unwrap_or(0.0), -r.mean_val_loss, -r.lr);
            let (ka, kb) = (key(&a), key(&b));
            if kb.partial_cmp(&ka) == Some(std::cmp::Ordering::Greater) {
                b
            } else {
                a
            }
        });
        best.extend(winner);
    }
    best
}

/// One run per (optimizer, lr, seed) over `lr_grid`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<Vec<BestRow>> {
    let start = Instant::now();
    if cfg.lr_grid.is_empty() {
        return Err(CliError::config("lr_grid is empty"));
    }
    let dir = out_dir(cfg)?;
    let base = load_dataset(cfg)?;
    let lrs: Vec<Option<f64>> = cfg.lr_grid.iter().map(|&lr| Some(lr)).collect();
    let results = runs(cfg, &base, &lrs)?;
    let best = select_best(cfg.task, &results);
    output::write_file(&dir.join("runs.csv"), &output::runs_csv(cfg.task, &results)?)?;
    output::write_file(&dir.join("sweep.csv"), &output::sweep_csv(cfg.task, &results)?)?;
    output::write_file(&dir.join("best.csv"), &output::best_csv(cfg.task, &best)?)?;
    output::write_meta(dir, "sweep", cfg, start.elapsed().as_millis())?;
    Ok(best)
}

pub fn cmd_selfcheck(cfg: &ExperimentConfig, suite: Option<&str>) -> CliResult<Vec<SuiteOutcome>> {
    if let Some(s) = suite {
        if !SUITES.contains(&s) {
            return Err(CliError::config(format!("unknown suite `{s}` (expected one of {})", SUITES.join(", "))));
        }
    }
    Ok(run_suites(suite, &cfg.quintic_coefficients))
}
