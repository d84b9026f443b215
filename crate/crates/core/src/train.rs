//! Full-batch training loops producing per-step trajectories.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objective::Objective;
use crate::optim::{HyperParams, Optimizer, OptimizerKind};

/// Losses above this count as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Number of updates applied, starting at 1.
    pub step: u64,
    pub loss: f64,
    pub metric: Option<f64>,
    /// FNV-1a hash of the parameter bits after the update.
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// Step at which the loss blew up or an update failed numerically.
    pub diverged_at: Option<u64>,
    pub initial_loss: f64,
    pub final_params: Vec<Matrix>,
    /// Parameters after every update, when requested.
    pub snapshots: Vec<Vec<Matrix>>,
}

impl Trajectory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

pub fn digest(params: &[Matrix]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for &x in p.as_slice() {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub steps: u64,
    pub keep_params: bool,
    pub evaluate_metric: bool,
}

impl RunOptions {
    pub fn steps(steps: u64) -> Self {
        Self {
            steps,
            keep_params: false,
            evaluate_metric: true,
        }
    }
}

fn is_numeric(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite { .. }
            | Error::NonPositive { .. }
            | Error::Singular { .. }
            | Error::NoConvergence { .. }
            | Error::PolarDiverged { .. }
            | Error::NegativeEigenvalue { .. }
    )
}

/// Runs `steps` full-batch updates of `kind` from `w0`, one optimizer state
/// per parameter block. Numeric blow-ups end the run early and are recorded
/// in [`Trajectory::diverged_at`]; configuration errors are returned.
pub fn run_trajectory(
    kind: OptimizerKind,
    obj: &dyn Objective,
    w0: Vec<Matrix>,
    hp: &HyperParams,
    opts: RunOptions,
) -> Result<Trajectory> {
    obj.check_params(&w0)?;
    let mut opts_per_block: Vec<Optimizer> = w0
        .iter()
        .map(|_| Optimizer::new(kind, hp.clone()))
        .collect::<Result<_>>()?;
    let mut params = w0;
    let (initial_loss, mut grads) = obj.loss_and_grad(&params)?;
    let mut traj = Trajectory {
        records: Vec::with_capacity(opts.steps as usize),
        diverged_at: None,
        initial_loss,
        final_params: Vec::new(),
        snapshots: Vec::new(),
    };

    for step in 1..=opts.steps {
        let updated: Result<Vec<Matrix>> = opts_per_block
            .iter_mut()
            .zip(params.iter().zip(&grads))
            .map(|(opt, (w, g))| opt.step(w, g))
            .collect();
        let next = match updated {
            Ok(p) => p,
            Err(e) if is_numeric(&e) => {
                traj.diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let (loss, g) = match obj.loss_and_grad(&next) {
            Ok(v) => v,
            Err(e) if is_numeric(&e) => {
                traj.diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let metric = if opts.evaluate_metric {
            obj.metric(&next)?
        } else {
            None
        };
        traj.records.push(Record {
            step,
            loss,
            metric,
            digest: digest(&next),
        });
        if opts.keep_params {
            traj.snapshots.push(next.clone());
        }
        params = next;
        grads = g;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            traj.diverged_at = Some(step);
            break;
        }
    }
    traj.final_params = params;
    Ok(traj)
}
