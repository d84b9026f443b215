//! Hand-written update rules, one arm per kind.

use super::{
    accumulate, bias_correct, decay, diag_precond, ema, matrix_root, muadam_step, squared,
    HyperParams, OptimizerKind, OptimizerState, StepMode,
};
use crate::decomp::sym_eig;
use crate::error::{Error, Result};
use crate::geometry::{lmo_base, BaseNorm};
use crate::matrix::Matrix;

/// One optimizer step: `w_next = w − γ_t·ΔW` plus the advanced state.
pub fn step(
    kind: OptimizerKind,
    state: &OptimizerState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<(Matrix, OptimizerState)> {
    hp.validate()?;
    state.check_shapes(w, g)?;
    match kind {
        OptimizerKind::MuAdam | OptimizerKind::MuAdamSania => {
            let hp = HyperParams {
                p: kind.diag_exponent().expect("muadam kinds have an exponent"),
                ..hp.clone()
            };
            return muadam_step(state, w, g, &hp);
        }
        OptimizerKind::Soap => return soap_step(state, w, g, hp),
        OptimizerKind::Splus => return splus_step(state, w, g, hp),
        _ => {}
    }

    let t = state.step_count;
    let gamma = hp.gamma_at(t);
    let rho = hp.rho;
    let mut next = state.clone();
    next.shape = Some(w.shape());

    let delta = match kind {
        OptimizerKind::Sgd => g.clone(),
        OptimizerKind::NormalizedSgd => normalize_frobenius(g, rho)?,
        OptimizerKind::SignSgd => g.map("sign", |x| rho * sign(x))?,
        OptimizerKind::Muon => {
            let input = if hp.muon_momentum {
                let m = ema(state.m.as_ref(), hp.beta1, g)?;
                let m_hat = bias_correct(&m, hp.beta1, t)?;
                next.m = Some(m);
                m_hat
            } else {
                g.clone()
            };
            lmo_base(&input, BaseNorm::Spectral, &hp.lmo_config())?.direction
        }
        OptimizerKind::AdaGrad => {
            let v = accumulate(state.v.as_ref(), &squared(g)?)?;
            let delta = match hp.mode {
                StepMode::Classic => g.hadamard_div(&diag_precond(&v, 0.5, hp.epsilon)?)?,
                StepMode::LmoNormalized => {
                    diag_lmo_frobenius(g, &diag_precond(&v, 0.25, hp.epsilon)?, rho)?
                }
            };
            next.v = Some(v);
            delta
        }
        OptimizerKind::Adam
        | OptimizerKind::AdamW
        | OptimizerKind::Madgrad
        | OptimizerKind::AdamSania => {
            let q = kind.diag_exponent().expect("adaptive kinds have an exponent");
            let m = ema(state.m.as_ref(), hp.beta1, g)?;
            let v = ema(state.v.as_ref(), hp.beta2, &squared(g)?)?;
            let m_hat = bias_correct(&m, hp.beta1, t)?;
            let v_hat = bias_correct(&v, hp.beta2, t)?;
            let delta = match hp.mode {
                // D² carries exponent 2q: √V̂ for Adam, V̂^{1/3} for MADGRAD, V̂ for SANIA.
                StepMode::Classic => m_hat.hadamard_div(&diag_precond(&v_hat, 2.0 * q, hp.epsilon)?)?,
                StepMode::LmoNormalized => {
                    diag_lmo_frobenius(&m_hat, &diag_precond(&v_hat, q, hp.epsilon)?, rho)?
                }
            };
            next.m = Some(m);
            next.v = Some(v);
            delta
        }
        OptimizerKind::Shampoo | OptimizerKind::OneSidedShampoo => {
            let hl = accumulate(state.hl.as_ref(), &g.matmul_t(g)?)?;
            let two_sided = kind == OptimizerKind::Shampoo;
            let hr = if two_sided {
                Some(accumulate(state.hr.as_ref(), &g.t_matmul(g)?)?)
            } else {
                None
            };
            // (LᵀL)⁻¹ with L = H_L^{1/8} (two-sided) or H_L^{1/4} (one-sided).
            let left_exp = if two_sided { -0.25 } else { -0.5 };
            let left = matrix_root(&hl, left_exp, hp)?;
            let mut pre = left.matmul(g)?;
            if let Some(hr) = &hr {
                pre = pre.matmul(&matrix_root(hr, -0.25, hp)?)?;
            }
            let delta = match hp.mode {
                StepMode::Classic => pre,
                StepMode::LmoNormalized => {
                    // ‖L·P·R‖_F = ‖H_L^{-1/8}·G·H_R^{-1/8}‖_F (two-sided), ‖H_L^{-1/4}·G‖_F (one-sided).
                    let half = matrix_root(&hl, left_exp / 2.0, hp)?.matmul(g)?;
                    let half = match &hr {
                        Some(hr) => half.matmul(&matrix_root(hr, -0.125, hp)?)?,
                        None => half,
                    };
                    let norm = half.frob_norm();
                    if norm == 0.0 {
                        Matrix::zeros(g.rows(), g.cols())
                    } else {
                        pre.scale(rho / norm)?
                    }
                }
            };
            next.hl = Some(hl);
            next.hr = hr;
            delta
        }
        OptimizerKind::MuAdam
        | OptimizerKind::MuAdamSania
        | OptimizerKind::Soap
        | OptimizerKind::Splus => unreachable!("dispatched above"),
    };

    let w_next = decay(kind, w, gamma, hp)?.lin_comb(1.0, &delta, -gamma)?;
    next.step_count = t + 1;
    Ok((w_next, next))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn normalize_frobenius(x: &Matrix, rho: f64) -> Result<Matrix> {
    let n = x.frob_norm();
    if n == 0.0 {
        Ok(Matrix::zeros(x.rows(), x.cols()))
    } else {
        x.scale(rho / n)
    }
}

/// `ρ · (x/d) / ‖x/d‖_F / d`, the LMO of `‖d ⊙ ·‖_F` written out.
fn diag_lmo_frobenius(x: &Matrix, d: &Matrix, rho: f64) -> Result<Matrix> {
    let scaled = x.hadamard_div(d)?;
    normalize_frobenius(&scaled, rho)?.hadamard_div(d)
}

/// Eigenbases of the Kronecker statistics, identity when none exist yet.
fn current_bases(state: &OptimizerState, m: usize, n: usize) -> (Matrix, Matrix) {
    let ql = state.ql.clone().unwrap_or_else(|| Matrix::identity(m));
    let qr = state.qr.clone().unwrap_or_else(|| Matrix::identity(n));
    (ql, qr)
}

/// Folds the current gradient into the EMA statistics and refreshes the
/// eigenbases on schedule. The step that just ran used the older bases, so
/// the rotation at step `t` only sees gradients before `t`.
pub(crate) fn advance_eigenbasis(
    state: &mut OptimizerState,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<()> {
    let beta = hp.precond_beta.unwrap_or(hp.beta2);
    let hl = ema(state.hl.as_ref(), beta, &g.matmul_t(g)?)?;
    let hr = ema(state.hr.as_ref(), beta, &g.t_matmul(g)?)?;
    if state.step_count % hp.refresh_every == 0 {
        state.ql = Some(sym_eig(&hl).map_err(eig_failure)?.q);
        state.qr = Some(sym_eig(&hr).map_err(eig_failure)?.q);
        state.refresh_counter += 1;
    }
    state.hl = Some(hl);
    state.hr = Some(hr);
    Ok(())
}

fn eig_failure(e: Error) -> Error {
    match e {
        Error::NoConvergence { iterations, residual, .. } => Error::NoConvergence {
            op: "eigenbasis refresh",
            iterations,
            residual,
        },
        other => other,
    }
}

/// Adam run in the eigenbasis of the Kronecker statistics.
pub fn soap_step(
    state: &OptimizerState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<(Matrix, OptimizerState)> {
    hp.validate()?;
    state.check_shapes(w, g)?;
    let t = state.step_count;
    let gamma = hp.gamma_at(t);
    let (ql, qr) = current_bases(state, w.rows(), w.cols());
    let mut next = state.clone();
    next.shape = Some(w.shape());

    let g_rot = ql.t_matmul(g)?.matmul(&qr)?;
    let m = ema(state.m.as_ref(), hp.beta1, g)?;
    let v = ema(state.v.as_ref(), hp.beta2, &squared(&g_rot)?)?;
    let m_hat_rot = ql.t_matmul(&bias_correct(&m, hp.beta1, t)?)?.matmul(&qr)?;
    let v_hat = bias_correct(&v, hp.beta2, t)?;
    let delta_rot = match hp.mode {
        StepMode::Classic => m_hat_rot.hadamard_div(&diag_precond(&v_hat, 0.5, hp.epsilon)?)?,
        StepMode::LmoNormalized => {
            diag_lmo_frobenius(&m_hat_rot, &diag_precond(&v_hat, 0.25, hp.epsilon)?, hp.rho)?
        }
    };
    let delta = ql.matmul(&delta_rot)?.matmul_t(&qr)?;
    next.m = Some(m);
    next.v = Some(v);
    next.ql = Some(ql);
    next.qr = Some(qr);

    let w_next = decay(OptimizerKind::Soap, w, gamma, hp)?.lin_comb(1.0, &delta, -gamma)?;
    advance_eigenbasis(&mut next, g, hp)?;
    next.step_count = t + 1;
    Ok((w_next, next))
}

/// Sign of the momentum measured in the eigenbasis of the Kronecker statistics.
pub fn splus_step(
    state: &OptimizerState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<(Matrix, OptimizerState)> {
    hp.validate()?;
    state.check_shapes(w, g)?;
    let t = state.step_count;
    let gamma = hp.gamma_at(t);
    let (ql, qr) = current_bases(state, w.rows(), w.cols());
    let mut next = state.clone();
    next.shape = Some(w.shape());

    let m = ema(state.m.as_ref(), hp.beta1, g)?;
    let m_hat_rot = ql.t_matmul(&bias_correct(&m, hp.beta1, t)?)?.matmul(&qr)?;
    let sign_rot = m_hat_rot.map("sign", |x| hp.rho * sign(x))?;
    let delta = ql.matmul(&sign_rot)?.matmul_t(&qr)?;
    next.m = Some(m);
    next.ql = Some(ql);
    next.qr = Some(qr);

    let w_next = decay(OptimizerKind::Splus, w, gamma, hp)?.lin_comb(1.0, &delta, -gamma)?;
    advance_eigenbasis(&mut next, g, hp)?;
    next.step_count = t + 1;
    Ok((w_next, next))
}
