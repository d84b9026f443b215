//! The generic formulation: accumulate statistics, turn them into a
//! [`Preconditioner`], take the LMO of the preconditioned norm.

use super::step::advance_eigenbasis;
use super::{
    accumulate, bias_correct, decay, diag_precond, ema, matrix_root, squared, HyperParams,
    OptimizerKind, OptimizerState, StepMode,
};
use crate::error::{Error, Result};
use crate::geometry::{lmo_precond, Preconditioner};
use crate::matrix::Matrix;

/// Applies the kind's statistic recursions for gradient `g`. Matrix roots
/// and bias corrections are deferred to [`materialize_preconditioner`].
pub fn update_preconditioner(
    kind: OptimizerKind,
    state: &OptimizerState,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<OptimizerState> {
    let mut next = state.clone();
    next.shape = Some(g.shape());
    if kind.uses_momentum(hp) {
        next.m = Some(ema(state.m.as_ref(), hp.beta1, g)?);
    }
    match kind {
        OptimizerKind::AdaGrad => next.v = Some(accumulate(state.v.as_ref(), &squared(g)?)?),
        OptimizerKind::Adam
        | OptimizerKind::AdamW
        | OptimizerKind::Madgrad
        | OptimizerKind::AdamSania
        | OptimizerKind::MuAdam
        | OptimizerKind::MuAdamSania => next.v = Some(ema(state.v.as_ref(), hp.beta2, &squared(g)?)?),
        OptimizerKind::Shampoo => {
            next.hl = Some(accumulate(state.hl.as_ref(), &g.matmul_t(g)?)?);
            next.hr = Some(accumulate(state.hr.as_ref(), &g.t_matmul(g)?)?);
        }
        OptimizerKind::OneSidedShampoo => {
            next.hl = Some(accumulate(state.hl.as_ref(), &g.matmul_t(g)?)?);
        }
        OptimizerKind::Soap | OptimizerKind::Splus => {
            let ql = state.ql.clone().unwrap_or_else(|| Matrix::identity(g.rows()));
            let qr = state.qr.clone().unwrap_or_else(|| Matrix::identity(g.cols()));
            if kind == OptimizerKind::Soap {
                let g_rot = ql.t_matmul(g)?.matmul(&qr)?;
                next.v = Some(ema(state.v.as_ref(), hp.beta2, &squared(&g_rot)?)?);
            }
            next.ql = Some(ql);
            next.qr = Some(qr);
        }
        OptimizerKind::Sgd
        | OptimizerKind::NormalizedSgd
        | OptimizerKind::SignSgd
        | OptimizerKind::Muon => {}
    }
    Ok(next)
}

/// The preconditioner whose LMO (with `kind.base_norm()`) is the kind's step.
/// `state` must already hold the statistics for the current step.
pub fn materialize_preconditioner(
    kind: OptimizerKind,
    state: &OptimizerState,
    hp: &HyperParams,
) -> Result<Preconditioner> {
    let t = state.step_count;
    let need = |buf: &Option<Matrix>, name: &'static str| buf.clone().ok_or(Error::MissingState(name));
    Ok(match kind {
        OptimizerKind::Sgd | OptimizerKind::NormalizedSgd | OptimizerKind::SignSgd | OptimizerKind::Muon => {
            Preconditioner::Identity
        }
        OptimizerKind::AdaGrad => {
            Preconditioner::Elementwise(diag_precond(&need(&state.v, "v")?, 0.25, hp.epsilon)?)
        }
        OptimizerKind::Adam
        | OptimizerKind::AdamW
        | OptimizerKind::Madgrad
        | OptimizerKind::AdamSania
        | OptimizerKind::MuAdam
        | OptimizerKind::MuAdamSania => {
            let q = kind.diag_exponent().expect("entrywise kinds have an exponent");
            let v_hat = bias_correct(&need(&state.v, "v")?, hp.beta2, t)?;
            Preconditioner::Elementwise(diag_precond(&v_hat, q, hp.epsilon)?)
        }
        OptimizerKind::Shampoo => Preconditioner::LeftRight {
            l: matrix_root(&need(&state.hl, "hl")?, 0.125, hp)?,
            r: matrix_root(&need(&state.hr, "hr")?, 0.125, hp)?,
        },
        OptimizerKind::OneSidedShampoo => {
            let (_, n) = state.shape.ok_or(Error::MissingState("shape"))?;
            Preconditioner::LeftRight {
                l: matrix_root(&need(&state.hl, "hl")?, 0.25, hp)?,
                r: Matrix::identity(n),
            }
        }
        OptimizerKind::Soap | OptimizerKind::Splus => {
            let rotation = Preconditioner::LeftRight {
                l: need(&state.ql, "ql")?.transpose(),
                r: need(&state.qr, "qr")?,
            };
            if kind == OptimizerKind::Splus {
                rotation
            } else {
                let v_hat = bias_correct(&need(&state.v, "v")?, hp.beta2, t)?;
                Preconditioner::composed(
                    rotation,
                    Preconditioner::Elementwise(diag_precond(&v_hat, 0.25, hp.epsilon)?),
                )
            }
        }
    })
}

/// One step through the generic path. In `Classic` mode the kinds with a
/// historical unnormalized form use `P⁻¹(P⁻ᵀ(·))` instead of the LMO; this
/// coincides with the hand-written classic step when `ε = 0`.
pub fn engine_step(
    kind: OptimizerKind,
    state: &OptimizerState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<(Matrix, OptimizerState)> {
    hp.validate()?;
    state.check_shapes(w, g)?;
    let t = state.step_count;
    let gamma = hp.gamma_at(t);
    let mut next = update_preconditioner(kind, state, g, hp)?;
    let precond = materialize_preconditioner(kind, &next, hp)?;
    let input = if kind.uses_momentum(hp) {
        bias_correct(next.m.as_ref().ok_or(Error::MissingState("m"))?, hp.beta1, t)?
    } else {
        g.clone()
    };
    let classic = hp.mode == StepMode::Classic
        && matches!(
            kind,
            OptimizerKind::AdaGrad
                | OptimizerKind::Adam
                | OptimizerKind::AdamW
                | OptimizerKind::Madgrad
                | OptimizerKind::AdamSania
                | OptimizerKind::Shampoo
                | OptimizerKind::OneSidedShampoo
                | OptimizerKind::Soap
        );
    let delta = if kind == OptimizerKind::Sgd {
        input
    } else if classic {
        precond.precondition(&input)?
    } else {
        lmo_precond(&input, &precond, kind.base_norm(), &hp.lmo_config())?.direction
    };
    let w_next = decay(kind, w, gamma, hp)?.lin_comb(1.0, &delta, -gamma)?;
    if kind.uses_eigenbasis() {
        advance_eigenbasis(&mut next, g, hp)?;
    }
    next.step_count = t + 1;
    Ok((w_next, next))
}
