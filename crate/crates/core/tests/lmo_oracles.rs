mod common;

use common::*;
use precnorm::geometry::{
    dual_norm, eval_precond_norm, lmo_base, lmo_precond, BaseNorm, LmoConfig, Preconditioner,
    SpectralBackend,
};
use precnorm::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn oracle_base(t: &Matrix, base: BaseNorm, rms: bool) -> f64 {
    let (m, n) = (t.rows() as f64, t.cols() as f64);
    match base {
        BaseNorm::Frobenius => frob(t),
        BaseNorm::Spectral => sigma_max(t) * if rms { (m / n).sqrt() } else { 1.0 },
        BaseNorm::MaxAbs => t.as_slice().iter().fold(0.0, |a, x| a.max(x.abs())),
        BaseNorm::ColNorm => {
            (0..t.cols()).map(|j| col_norm(t, j)).fold(0.0, f64::max) / if rms { m.sqrt() } else { 1.0 }
        }
        BaseNorm::RowNorm => {
            (0..t.rows()).map(|i| row_norm(t, i)).fold(0.0, f64::max) * if rms { n.sqrt() } else { 1.0 }
        }
    }
}

/// The preconditioner map written out by hand.
fn oracle_apply(p: &Preconditioner, t: &Matrix) -> Matrix {
    match p {
        Preconditioner::Identity => t.clone(),
        Preconditioner::LeftRight { l, r } => l.matmul(t).unwrap().matmul(r).unwrap(),
        Preconditioner::Elementwise(d) => {
            Matrix::from_fn(t.rows(), t.cols(), |i, j| d.get(i, j) * t.get(i, j)).unwrap()
        }
        Preconditioner::Composed { outer, inner } => oracle_apply(inner, &oracle_apply(outer, t)),
    }
}

fn oracle_norm(p: &Preconditioner, t: &Matrix, base: BaseNorm, rms: bool) -> f64 {
    oracle_base(&oracle_apply(p, t), base, rms)
}

fn random_preconditioners(m: usize, n: usize, rng: &mut impl Rng) -> Vec<Preconditioner> {
    let lr = Preconditioner::left_right(conditioned(m, 10.0, rng), conditioned(n, 10.0, rng)).unwrap();
    let d = Preconditioner::elementwise(positive(m, n, rng)).unwrap();
    let rot = Preconditioner::left_right(orthogonal(m, rng).transpose(), orthogonal(n, rng)).unwrap();
    let soap = Preconditioner::composed(rot, Preconditioner::elementwise(positive(m, n, rng)).unwrap());
    vec![Preconditioner::Identity, lr, d, soap]
}

fn exact(rho: f64, rms: bool) -> LmoConfig {
    LmoConfig {
        rho,
        spectral_backend: SpectralBackend::ExactSvd,
        rms_scaling: rms,
    }
}

#[test]
fn composed_lmo_beats_sampled_candidates() {
    let mut rng = rng(11);
    let (m, n) = (3, 4);
    for rms in [false, true] {
        for base in BaseNorm::ALL {
            for trial in 0..20 {
                let g = gaussian(m, n, &mut rng);
                let rho = rng.random_range(0.5..2.0);
                let cfg = exact(rho, rms);
                for p in random_preconditioners(m, n, &mut rng) {
                    let lmo = lmo_precond(&g, &p, base, &cfg).unwrap().direction;
                    let attained = inner(&g, &lmo);
                    let on_ball = oracle_norm(&p, &lmo, base, rms);
                    assert!(
                        (on_ball - rho).abs() <= 1e-8 * rho,
                        "{base:?} {} rms={rms} trial {trial}: norm {on_ball} vs {rho}",
                        p.tag()
                    );
                    for k in 0..300 {
                        // Half uniform directions, half perturbations of the answer.
                        let s = if k % 2 == 0 {
                            gaussian(m, n, &mut rng)
                        } else {
                            lmo.lin_comb(1.0, &gaussian(m, n, &mut rng), 0.05).unwrap()
                        };
                        let cand = s.scale(rho / oracle_norm(&p, &s, base, rms)).unwrap();
                        let value = inner(&g, &cand);
                        assert!(
                            attained >= value - 1e-9,
                            "{base:?} {} rms={rms}: candidate {value} beats {attained}",
                            p.tag()
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn duality_identities_against_oracles() {
    let mut rng = rng(12);
    for (m, n) in [(3, 4), (5, 2), (4, 4)] {
        for _ in 0..30 {
            let g = gaussian(m, n, &mut rng);
            let rho = rng.random_range(0.5..3.0);
            let cfg = exact(rho, false);
            let cases = [
                (BaseNorm::Frobenius, frob(&g)),
                (BaseNorm::Spectral, sigma_sum(&g)),
                (BaseNorm::MaxAbs, g.as_slice().iter().map(|x| x.abs()).sum()),
                (BaseNorm::ColNorm, (0..n).map(|j| col_norm(&g, j)).sum()),
                (BaseNorm::RowNorm, (0..m).map(|i| row_norm(&g, i)).sum()),
            ];
            for (base, dual) in cases {
                let lmo = lmo_base(&g, base, &cfg).unwrap().direction;
                let lhs = inner(&g, &lmo);
                assert!((lhs - rho * dual).abs() <= 1e-9 * (1.0 + rho * dual), "{base:?}");
                assert!((dual_norm(&g, base, false).unwrap() - dual).abs() <= 1e-10 * (1.0 + dual));
            }
        }
    }
}

#[test]
fn rms_lmo_lies_on_its_ball() {
    let mut rng = rng(13);
    for base in BaseNorm::ALL {
        let g = gaussian(6, 3, &mut rng);
        let lmo = lmo_base(&g, base, &exact(1.0, true)).unwrap().direction;
        assert!((oracle_base(&lmo, base, true) - 1.0).abs() < 1e-12, "{base:?}");
        let lhs = inner(&g, &lmo);
        assert!((lhs - dual_norm(&g, base, true).unwrap()).abs() < 1e-10, "{base:?}");
    }
}

#[test]
fn preconditioned_norm_matches_hand_application() {
    let mut rng = rng(14);
    for p in random_preconditioners(3, 4, &mut rng) {
        let t = gaussian(3, 4, &mut rng);
        for base in BaseNorm::ALL {
            let got = eval_precond_norm(&t, &p, base, false).unwrap();
            let want = oracle_norm(&p, &t, base, false);
            assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{base:?} {}", p.tag());
        }
    }
}

fn small_matrix() -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, 12).prop_map(|v| Matrix::new(3, 4, v).unwrap())
}

fn fixed_preconditioner(which: u8) -> Preconditioner {
    let mut rng = rng(99 + which as u64);
    random_preconditioners(3, 4, &mut rng).swap_remove(which as usize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn precond_norm_is_homogeneous(t in small_matrix(), c in -5.0f64..5.0, which in 0u8..4, b in 0usize..5) {
        let p = fixed_preconditioner(which);
        let base = BaseNorm::ALL[b];
        let lhs = eval_precond_norm(&t.scale(c).unwrap(), &p, base, false).unwrap();
        let rhs = c.abs() * eval_precond_norm(&t, &p, base, false).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
    }

    #[test]
    fn precond_norm_triangle(a in small_matrix(), b2 in small_matrix(), which in 0u8..4, b in 0usize..5) {
        let p = fixed_preconditioner(which);
        let base = BaseNorm::ALL[b];
        let lhs = eval_precond_norm(&a.add(&b2).unwrap(), &p, base, false).unwrap();
        let rhs = eval_precond_norm(&a, &p, base, false).unwrap() + eval_precond_norm(&b2, &p, base, false).unwrap();
        prop_assert!(lhs <= rhs + 1e-10 * (1.0 + rhs));
    }

    #[test]
    fn lmo_is_positively_homogeneous_of_degree_zero(g in small_matrix(), c in 0.1f64..10.0, b in 0usize..5) {
        prop_assume!(g.max_abs() > 1e-3);
        let base = BaseNorm::ALL[b];
        let cfg = exact(1.0, false);
        let a = lmo_base(&g, base, &cfg).unwrap().direction;
        let s = lmo_base(&g.scale(c).unwrap(), base, &cfg).unwrap().direction;
        prop_assert!(a.frob_distance(&s) <= 1e-9);
    }
}
