mod common;

use common::*;
use precnorm::geometry::{lmo_precond, BaseNorm, LmoConfig, Preconditioner, SpectralBackend};
use precnorm::invariance::{check_theorem2_conditions, reparametrize, run_pair, Reparam, Verdict};
use precnorm::objective::{check_gradient, Objective};
use precnorm::optim::{materialize_preconditioner, update_preconditioner, HyperParams, OptimizerKind, OptimizerState, StepMode};
use precnorm::tasks::QuadraticLoss;
use precnorm::Matrix;

fn quadratic(seed: u64) -> (QuadraticLoss, Matrix) {
    let mut r = rng(seed);
    let x = gaussian(24, 5, &mut r);
    let y = gaussian(24, 3, &mut r);
    (QuadraticLoss::new(x, y).unwrap(), gaussian(5, 3, &mut r))
}

fn sania(gamma: f64) -> HyperParams {
    HyperParams {
        gamma,
        epsilon: 1e-40,
        mode: StepMode::Classic,
        ..HyperParams::default()
    }
}

#[test]
fn sania_is_scale_invariant_on_the_quadratic() {
    for seed in [18, 52, 812] {
        let (q, w0) = quadratic(seed);
        let a = Reparam::random_scale(5, 3, 10.0, seed).unwrap();
        let pair = run_pair(OptimizerKind::AdamSania, &q, vec![a], vec![w0], &sania(1e-3), 200, 1e-6).unwrap();
        assert_eq!(pair.report.verdict, Verdict::Invariant, "{:?}", pair.report);
        assert_eq!(pair.report.steps, 200);
    }
}

#[test]
fn muadam_sania_is_scale_invariant_on_the_quadratic() {
    for seed in [18, 52, 812] {
        let (q, w0) = quadratic(seed);
        let a = Reparam::random_scale(5, 3, 10.0, seed).unwrap();
        let hp = HyperParams {
            gamma: 1e-3,
            epsilon: 1e-40,
            ..HyperParams::default()
        };
        let pair = run_pair(OptimizerKind::MuAdamSania, &q, vec![a], vec![w0], &hp, 200, 1e-6).unwrap();
        assert_eq!(pair.report.verdict, Verdict::Invariant, "{:?}", pair.report);
    }
}

#[test]
fn sgd_adam_and_muon_are_not_scale_invariant() {
    let (q, w0) = quadratic(18);
    let a = Reparam::random_scale(5, 3, 2.0, 18).unwrap();
    for (kind, gamma) in [(OptimizerKind::Sgd, 1e-4), (OptimizerKind::AdamW, 1e-2), (OptimizerKind::Muon, 1e-2)] {
        let hp = HyperParams {
            gamma,
            ..HyperParams::default()
        };
        let pair = run_pair(kind, &q, vec![a.clone()], vec![w0.clone()], &hp, 50, 1e-6).unwrap();
        assert_eq!(pair.report.verdict, Verdict::NotInvariant, "{kind}");
        assert!(pair.report.max_param_gap >= 1e-3, "{kind}: {:?}", pair.report);
    }
}

#[test]
fn identity_reparam_is_trivially_invariant() {
    let (q, w0) = quadratic(3);
    for kind in OptimizerKind::ALL {
        let pair = run_pair(kind, &q, vec![Reparam::Identity], vec![w0.clone()], &HyperParams::default(), 20, 0.0).unwrap();
        assert_eq!(pair.report.max_loss_gap, 0.0, "{kind}");
        assert_eq!(pair.report.verdict, Verdict::Invariant);
    }
}

fn exact() -> LmoConfig {
    LmoConfig {
        spectral_backend: SpectralBackend::ExactSvd,
        ..LmoConfig::default()
    }
}

/// Step on the new loss mapped back to original coordinates.
fn mapped_step(p_new: &Preconditioner, g: &Matrix, r: &Reparam, base: BaseNorm) -> Matrix {
    let g_new = r.pullback(g).unwrap();
    let t_new = lmo_precond(&g_new, p_new, base, &exact()).unwrap().direction;
    r.forward(&t_new).unwrap()
}

#[test]
fn invariance_predicate_agrees_with_step_equality_scale() {
    let mut rng = rng(41);
    for base in [BaseNorm::Frobenius, BaseNorm::Spectral, BaseNorm::MaxAbs] {
        for _ in 0..20 {
            let g = gaussian(3, 4, &mut rng);
            let d = positive(3, 4, &mut rng);
            let a = positive(3, 4, &mut rng).map("spread", |x| x.powi(3)).unwrap();
            let r = Reparam::scale(a.clone()).unwrap();
            let p = Preconditioner::elementwise(d.clone()).unwrap();
            let reference = lmo_precond(&g, &p, base, &exact()).unwrap().direction;

            let good = Preconditioner::elementwise(a.hadamard(&d).unwrap()).unwrap();
            assert!(check_theorem2_conditions(&p, &good, &r).unwrap());
            assert!(rel_close(&reference, &mapped_step(&good, &g, &r, base)) <= 1e-9, "{base:?}");

            assert!(!check_theorem2_conditions(&p, &p, &r).unwrap());
            assert!(rel_close(&reference, &mapped_step(&p, &g, &r, base)) > 1e-6, "{base:?}");
        }
    }
}

#[test]
fn invariance_predicate_agrees_with_step_equality_affine() {
    let mut rng = rng(42);
    for base in [BaseNorm::Frobenius, BaseNorm::Spectral] {
        for _ in 0..20 {
            let g = gaussian(3, 4, &mut rng);
            let (l, rr) = (conditioned(3, 10.0, &mut rng), conditioned(4, 10.0, &mut rng));
            let (al, ar) = (conditioned(3, 50.0, &mut rng), conditioned(4, 50.0, &mut rng));
            let r = Reparam::affine(al.clone(), ar.clone()).unwrap();
            let p = Preconditioner::left_right(l.clone(), rr.clone()).unwrap();
            let reference = lmo_precond(&g, &p, base, &exact()).unwrap().direction;

            let good = Preconditioner::left_right(l.matmul(&al).unwrap(), ar.matmul(&rr).unwrap()).unwrap();
            assert!(check_theorem2_conditions(&p, &good, &r).unwrap());
            assert!(rel_close(&reference, &mapped_step(&good, &g, &r, base)) <= 1e-9, "{base:?}");

            assert!(!check_theorem2_conditions(&p, &p, &r).unwrap());
            assert!(rel_close(&reference, &mapped_step(&p, &g, &r, base)) > 1e-6, "{base:?}");
        }
    }
}

#[test]
fn sania_recursion_transforms_with_the_scale() {
    let mut rng = rng(43);
    let a = positive(3, 4, &mut rng);
    let r = Reparam::scale(a.clone()).unwrap();
    let hp = HyperParams {
        epsilon: 0.0,
        ..HyperParams::default()
    };
    for (kind, expect) in [(OptimizerKind::AdamSania, true), (OptimizerKind::MuAdamSania, true), (OptimizerKind::Adam, false)] {
        let (mut s, mut s_new) = (OptimizerState::new(), OptimizerState::new());
        for t in 0..8 {
            let g = gaussian(3, 4, &mut rng);
            s = update_preconditioner(kind, &s, &g, &hp).unwrap();
            s_new = update_preconditioner(kind, &s_new, &a.hadamard(&g).unwrap(), &hp).unwrap();
            let p = materialize_preconditioner(kind, &s, &hp).unwrap();
            let p_new = materialize_preconditioner(kind, &s_new, &hp).unwrap();
            assert_eq!(check_theorem2_conditions(&p, &p_new, &r).unwrap(), expect, "{kind} t={t}");
            s.step_count += 1;
            s_new.step_count += 1;
        }
    }
}

#[test]
fn reparametrized_gradients_pass_finite_differences() {
    let mut rng = rng(44);
    let (q, w0) = quadratic(5);
    let scale = reparametrize(&q, vec![Reparam::random_scale(5, 3, 1.0, 5).unwrap()]).unwrap();
    let affine = reparametrize(
        &q,
        vec![Reparam::affine(conditioned(5, 5.0, &mut rng), conditioned(3, 5.0, &mut rng)).unwrap()],
    )
    .unwrap();
    for obj in [&scale as &dyn Objective, &affine] {
        let check = check_gradient(obj, std::slice::from_ref(&w0), 1.0, 20, &mut rng).unwrap();
        assert!(check.passes(1e-5), "{check:?}");
    }
}

#[test]
fn affine_linear_model_matches_direct_construction() {
    let mut rng = rng(45);
    let (q, _) = quadratic(6);
    let a = conditioned(5, 20.0, &mut rng);
    let direct = QuadraticLoss::new(q.x.matmul(&a).unwrap(), q.y.clone()).unwrap();
    let wrapped = reparametrize(&q, vec![Reparam::affine(a, Matrix::identity(3)).unwrap()]).unwrap();
    for _ in 0..20 {
        let w = gaussian(5, 3, &mut rng);
        let (l1, g1) = direct.loss_and_grad(std::slice::from_ref(&w)).unwrap();
        let (l2, g2) = wrapped.loss_and_grad(std::slice::from_ref(&w)).unwrap();
        assert!((l1 - l2).abs() <= 1e-10 * l1.max(1.0));
        assert!(rel_close(&g1[0], &g2[0]) <= 1e-10);
    }
}

#[test]
fn invariance_predicate_rejects_mismatched_tags() {
    let r = Reparam::scale(Matrix::filled(2, 2, 2.0)).unwrap();
    let lr = Preconditioner::left_right(Matrix::identity(2), Matrix::identity(2)).unwrap();
    let d = Preconditioner::elementwise(Matrix::filled(2, 2, 1.0)).unwrap();
    assert!(check_theorem2_conditions(&lr, &d, &r).is_err());
    assert!(check_theorem2_conditions(&lr, &lr, &r).is_err());
}
