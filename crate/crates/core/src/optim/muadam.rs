use super::{bias_correct, decay, diag_precond, ema, squared, HyperParams, OptimizerKind, OptimizerState};
use crate::error::{Error, Result};
use crate::geometry::{lmo_base, BaseNorm};
use crate::matrix::Matrix;

/// MuAdam (`p = 1/4`) and MuAdam-SANIA (`p = 1/2`): Adam moments, an
/// entrywise preconditioner `V̂^p + ε` applied on both sides of a spectral LMO.
pub fn muadam_step(
    state: &OptimizerState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
) -> Result<(Matrix, OptimizerState)> {
    hp.validate()?;
    state.check_shapes(w, g)?;
    if hp.p != 0.25 && hp.p != 0.5 {
        return Err(Error::InvalidParameter(format!("muadam needs p in {{1/4, 1/2}}, got {}", hp.p)));
    }
    let t = state.step_count;
    let gamma = hp.gamma_at(t);

    let m = ema(state.m.as_ref(), hp.beta1, g)?;
    let v = ema(state.v.as_ref(), hp.beta2, &squared(g)?)?;
    let m_hat = bias_correct(&m, hp.beta1, t)?;
    let v_hat = bias_correct(&v, hp.beta2, t)?;
    let d = diag_precond(&v_hat, hp.p, hp.epsilon)?;

    let n = m_hat.hadamard_div(&d)?;
    let n_polar = lmo_base(&n, BaseNorm::Spectral, &hp.lmo_config())?.direction;
    let n_final = n_polar.hadamard_div(&d)?;

    let kind = if hp.p == 0.5 {
        OptimizerKind::MuAdamSania
    } else {
        OptimizerKind::MuAdam
    };
    let w_next = decay(kind, w, gamma, hp)?.lin_comb(1.0, &n_final, -gamma)?;
    let next = OptimizerState {
        step_count: t + 1,
        m: Some(m),
        v: Some(v),
        shape: Some(w.shape()),
        ..state.clone()
    };
    Ok((w_next, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpectralBackend;
    use crate::polar::polar_exact;

    #[test]
    fn sania_first_step_on_constant_gradient() {
        let c = 0.7;
        let g = Matrix::filled(2, 3, c);
        let hp = HyperParams {
            gamma: 1.0,
            p: 0.5,
            epsilon: 0.0,
            spectral_backend: SpectralBackend::ExactSvd,
            ..HyperParams::default()
        };
        let (w, _) = muadam_step(&OptimizerState::new(), &Matrix::zeros(2, 3), &g, &hp).unwrap();
        let ones = Matrix::filled(2, 3, 1.0);
        let expect = polar_exact(&ones).unwrap().scale(-1.0 / c).unwrap();
        assert!(w.frob_distance(&expect) < 1e-14);
    }

    #[test]
    fn zero_history_with_epsilon_is_finite() {
        let hp = HyperParams {
            epsilon: 1e-8,
            p: 0.25,
            ..HyperParams::default()
        };
        let (w, s) = muadam_step(
            &OptimizerState::new(),
            &Matrix::identity(2),
            &Matrix::zeros(2, 2),
            &hp,
        )
        .unwrap();
        assert_eq!(w, Matrix::identity(2));
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn rejects_other_exponents() {
        let hp = HyperParams {
            p: 0.3,
            ..HyperParams::default()
        };
        assert!(muadam_step(&OptimizerState::new(), &Matrix::identity(2), &Matrix::identity(2), &hp).is_err());
    }
}
