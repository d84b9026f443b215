//! CSV, SVG and metadata writers. Everything except `meta.json` is a pure
//! function of the configuration, so repeated runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, CliResult};
use crate::experiment::RunResult;

pub const RUNS_HEADER: [&str; 9] = [
    "run_id",
    "optimizer",
    "task",
    "seed",
    "step",
    "train_loss",
    "test_accuracy",
    "scaled",
    "wall_ms",
];

pub const SWEEP_HEADER: [&str; 10] = [
    "run_id",
    "optimizer",
    "task",
    "seed",
    "lr",
    "final_train_loss",
    "val_loss",
    "val_accuracy",
    "test_accuracy",
    "diverged",
];

pub const BEST_HEADER: [&str; 7] = [
    "optimizer",
    "task",
    "lr",
    "mean_val_accuracy",
    "mean_val_loss",
    "mean_final_train_loss",
    "seeds",
];

pub fn version() -> &'static str {
    env!("PRECNORM_VERSION")
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::config(format!("csv: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| CliError::config(format!("csv: {e}")))
}

/// One row per recorded step. A run that failed numerically before
/// recording its last step gets a closing `NaN` row at that step.
pub fn runs_csv(task: Task, runs: &[RunResult]) -> CliResult<Vec<u8>> {
    let mut rows = Vec::new();
    for run in runs {
        let base = |step: u64, loss: String, acc: String| {
            vec![
                run.run_id.clone(),
                run.optimizer.to_string(),
                task.to_string(),
                run.seed.to_string(),
                step.to_string(),
                loss,
                acc,
                run.scaled.to_string(),
                "0".to_string(),
            ]
        };
        for r in &run.trajectory.records {
            rows.push(base(r.step, num(r.loss), opt(r.metric)));
        }
        if let Some(at) = run.trajectory.diverged_at {
            if run.trajectory.records.last().map(|r| r.step) != Some(at) {
                rows.push(base(at, num(f64::NAN), String::new()));
            }
        }
    }
    csv_bytes(&RUNS_HEADER, rows)
}

pub fn sweep_csv(task: Task, runs: &[RunResult]) -> CliResult<Vec<u8>> {
    let rows = runs
        .iter()
        .map(|r| {
            vec![
                r.run_id.clone(),
                r.optimizer.to_string(),
                task.to_string(),
                r.seed.to_string(),
                num(r.lr),
                num(r.final_loss()),
                num(r.val_loss),
                opt(r.val_accuracy),
                opt(r.test_accuracy),
                r.diverged().to_string(),
            ]
        })
        .collect();
    csv_bytes(&SWEEP_HEADER, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestRow {
    pub optimizer: String,
    pub lr: f64,
    pub mean_val_accuracy: Option<f64>,
    pub mean_val_loss: f64,
    pub mean_final_train_loss: f64,
    pub seeds: usize,
}

pub fn best_csv(task: Task, best: &[BestRow]) -> CliResult<Vec<u8>> {
    let rows = best
        .iter()
        .map(|b| {
            vec![
                b.optimizer.clone(),
                task.to_string(),
                num(b.lr),
                opt(b.mean_val_accuracy),
                num(b.mean_val_loss),
                num(b.mean_final_train_loss),
                b.seeds.to_string(),
            ]
        })
        .collect();
    csv_bytes(&BEST_HEADER, rows)
}

pub const INVARIANCE_HEADER: [&str; 8] = [
    "optimizer",
    "seed",
    "verdict",
    "max_loss_gap",
    "max_param_gap",
    "steps",
    "diverged",
    "tolerance",
];

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    /// Learning rates come from a fixed grid rather than a Bayesian tuner.
    tuning: &'a str,
    wall_time_ms: u128,
}

pub fn write_meta(dir: &Path, command: &str, cfg: &ExperimentConfig, wall_time_ms: u128) -> CliResult<()> {
    let meta = Meta {
        command,
        version: version(),
        config: cfg,
        tuning: "grid sweep over lr_grid; replaces the Optuna search",
        wall_time_ms,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::config(e.to_string()))?;
    write_file(&dir.join("meta.json"), format!("{text}\n").as_bytes())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Panel<'a> {
    title: &'a str,
    x0: f64,
    log: bool,
}

const W: f64 = 440.0;
const H: f64 = 300.0;
const PAD: f64 = 45.0;

/// Two line charts side by side: training loss (log scale) and test
/// accuracy, one polyline per run.
pub fn runs_svg(runs: &[RunResult]) -> String {
    let steps = runs
        .iter()
        .flat_map(|r| r.trajectory.records.last().map(|x| x.step))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let mut svg = String::new();
    let legend_h = 16.0 * runs.len() as f64;
    let total_h = H + 20.0 + legend_h;
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{total_h}" font-family="sans-serif" font-size="11">"#,
        2.0 * W
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let series = |log: bool| -> Vec<Vec<(f64, f64)>> {
        runs.iter()
            .map(|r| {
                r.trajectory
                    .records
                    .iter()
                    .filter_map(|rec| {
                        let v = if log { Some(rec.loss) } else { rec.metric }?;
                        let v = if log { (v > 0.0).then(|| v.log10())? } else { v };
                        v.is_finite().then_some((rec.step as f64, v))
                    })
                    .collect()
            })
            .collect()
    };

    for panel in [
        Panel {
            title: "train loss (log10)",
            x0: 0.0,
            log: true,
        },
        Panel {
            title: "test accuracy",
            x0: W,
            log: false,
        },
    ] {
        let data = series(panel.log);
        let (mut lo, mut hi) = if panel.log { (f64::MAX, f64::MIN) } else { (0.0, 1.0) };
        for (_, v) in data.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if lo > hi {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let (left, top, pw, ph) = (panel.x0 + PAD, 25.0, W - PAD - 15.0, H - 25.0 - PAD);
        writeln!(
            svg,
            r#"<text x="{:.1}" y="16" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            panel.title
        )
        .unwrap();
        writeln!(
            svg,
            r##"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##
        )
        .unwrap();
        for (frac, anchor) in [(0.0, lo), (1.0, hi)] {
            let y = top + ph * (1.0 - frac);
            writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{anchor:.3}</text>"#,
                left - 4.0,
                y + 4.0
            )
            .unwrap();
        }
        writeln!(
            svg,
            r#"<text x="{left:.1}" y="{:.1}">0</text><text x="{:.1}" y="{:.1}" text-anchor="end">{steps}</text>"#,
            top + ph + 14.0,
            left + pw,
            top + ph + 14.0
        )
        .unwrap();
        for (i, pts) in data.iter().enumerate() {
            if pts.is_empty() {
                continue;
            }
            let coords: Vec<String> = pts
                .iter()
                .map(|&(s, v)| {
                    let x = left + pw * s / steps;
                    let y = top + ph * (1.0 - (v - lo) / (hi - lo));
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                PALETTE[i % PALETTE.len()],
                coords.join(" ")
            )
            .unwrap();
        }
    }
    for (i, r) in runs.iter().enumerate() {
        let y = H + 10.0 + 16.0 * i as f64;
        writeln!(
            svg,
            r#"<rect x="{PAD}" y="{:.1}" width="12" height="3" fill="{}"/><text x="{:.1}" y="{:.1}">{}{}</text>"#,
            y + 4.0,
            PALETTE[i % PALETTE.len()],
            PAD + 18.0,
            y + 9.0,
            r.run_id,
            if r.scaled { " (scaled)" } else { "" }
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
