//! Reduced-size oracle suites bundled into `precnorm selfcheck`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use precnorm::decomp::{default_floor, spd_power, svd, sym_eig};
use precnorm::geometry::{eval_precond_norm, lmo_precond, BaseNorm, LmoConfig, Preconditioner, SpectralBackend};
use precnorm::invariance::{reparametrize, run_pair, vector_reference_suite, Reparam, Verdict};
use precnorm::objective::check_gradient;
use precnorm::optim::{HyperParams, OptimizerKind, StepMode};
use precnorm::polar::{polar_exact, polar_iterate, PolarSchedule};
use precnorm::tasks::{gaussian_blobs, MlpLoss, QuadraticLoss};
use precnorm::{Matrix, Result};

pub const SUITES: [&str; 5] = ["lmo", "polar", "linalg", "grad", "invariance"];

/// Band the default quintic keeps every singular value in after 5 steps.
pub const QUINTIC_SIGMA_BAND: (f64, f64) = (0.6, 1.25);

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal)).expect("finite draws")
}

fn positive(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5f64..1.5).exp()).expect("finite draws")
}

fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    Ok(svd(&gaussian(n, n, rng))?.u)
}

/// `U·diag(s)·Vᵀ` with singular values log-uniform in `[1, cond]`.
fn conditioned(n: usize, cond: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..cond.ln()).exp()).collect();
    s[0] = 1.0;
    s[n - 1] = cond;
    orthogonal(n, rng)?.matmul(&Matrix::diag(&s)?)?.matmul_t(&orthogonal(n, rng)?)
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.frob_distance(b) / a.frob_norm().max(f64::MIN_POSITIVE)
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> SuiteOutcome {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    SuiteOutcome {
        name,
        passed,
        detail,
        elapsed_ms: start.elapsed().as_millis(),
    }
}

/// The LMO beats sampled feasible points, lies on the unit sphere of its
/// norm, and meets the duality identities.
pub fn lmo_suite() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = LmoConfig {
        spectral_backend: SpectralBackend::ExactSvd,
        ..LmoConfig::default()
    };
    let (mut worst_gap, mut worst_boundary) = (f64::INFINITY, 0.0_f64);
    for _ in 0..20 {
        let g = gaussian(3, 4, &mut rng);
        let preconds = [
            Preconditioner::Identity,
            Preconditioner::left_right(conditioned(3, 10.0, &mut rng)?, conditioned(4, 10.0, &mut rng)?)?,
            Preconditioner::elementwise(positive(3, 4, &mut rng))?,
        ];
        for p in &preconds {
            for base in BaseNorm::ALL {
                let t = lmo_precond(&g, p, base, &cfg)?.direction;
                let value = g.frob_inner(&t)?;
                worst_boundary = worst_boundary.max((eval_precond_norm(&t, p, base, false)? - 1.0).abs());
                for _ in 0..200 {
                    let c = gaussian(3, 4, &mut rng);
                    let c = c.scale(1.0 / eval_precond_norm(&c, p, base, false)?)?;
                    worst_gap = worst_gap.min(value - g.frob_inner(&c)?);
                }
            }
        }
    }
    let mut worst_duality = 0.0_f64;
    for _ in 0..20 {
        let g = gaussian(3, 4, &mut rng);
        for (base, dual) in [
            (BaseNorm::Frobenius, g.frob_norm()),
            (BaseNorm::Spectral, svd(&g)?.sigma.iter().sum()),
            (BaseNorm::MaxAbs, g.sum_abs()),
        ] {
            let t = lmo_precond(&g, &Preconditioner::Identity, base, &cfg)?.direction;
            worst_duality = worst_duality.max((g.frob_inner(&t)? - dual).abs());
        }
    }
    let ok = worst_gap >= -1e-9 && worst_boundary <= 1e-8 && worst_duality <= 1e-9;
    Ok((
        ok,
        format!("min gap {worst_gap:.2e}, boundary {worst_boundary:.1e}, duality {worst_duality:.1e}"),
    ))
}

/// Cubic Newton–Schulz against the SVD polar factor, and the configured
/// quintic schedule against the singular-value band it is known to reach.
pub fn polar_suite(quintic: &[(f64, f64, f64)]) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let schedule = PolarSchedule::quintic(quintic.to_vec());
    schedule.validate()?;
    let (mut cubic_worst, mut lo, mut hi) = (0.0_f64, f64::INFINITY, 0.0_f64);
    let mut failure = None;
    for i in 0..20 {
        let n = 2 + i % 5;
        let g = conditioned(n, 100.0, &mut rng)?;
        let exact = polar_exact(&g)?;
        cubic_worst = cubic_worst.max(polar_iterate(&g, &PolarSchedule::cubic(30))?.factor.frob_distance(&exact));
        match polar_iterate(&g, &schedule) {
            Ok(out) => {
                for s in svd(&out.factor)?.sigma {
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
            }
            Err(e) => failure = Some(e.to_string()),
        }
    }
    let band = QUINTIC_SIGMA_BAND;
    let ok = failure.is_none() && cubic_worst <= 1e-5 && lo >= band.0 && hi <= band.1;
    let quintic = match failure {
        Some(e) => format!("quintic failed: {e}"),
        None => format!("quintic sigma in [{lo:.3}, {hi:.3}] (band [{}, {}])", band.0, band.1),
    };
    Ok((ok, format!("cubic max gap {cubic_worst:.1e}; {quintic}")))
}

pub fn linalg_suite() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0_f64;
    for i in 0..20 {
        let (m, n) = (2 + i % 4, 2 + (i / 4) % 4);
        let a = gaussian(m, n, &mut rng);
        let d = svd(&a)?;
        worst = worst.max(rel(&a, &d.reconstruct()?));
        let r = d.sigma.len();
        worst = worst.max(d.u.t_matmul(&d.u)?.frob_distance(&Matrix::identity(r)));
        worst = worst.max(d.v.t_matmul(&d.v)?.frob_distance(&Matrix::identity(r)));
        if d.sigma.windows(2).any(|w| w[0] < w[1]) {
            worst = f64::INFINITY;
        }

        let b = gaussian(n, n, &mut rng);
        let s = b.t_matmul(&b)?.add(&Matrix::identity(n))?;
        let e = sym_eig(&s)?;
        worst = worst.max(rel(&s, &e.reconstruct()?));
        let root = spd_power(&s, -0.5, default_floor(e.lambda[0]))?;
        worst = worst.max(root.matmul(&s)?.matmul(&root)?.frob_distance(&Matrix::identity(n)));
    }
    Ok((worst <= 1e-10, format!("max residual {worst:.1e}")))
}

pub fn grad_suite() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let q = QuadraticLoss::new(gaussian(12, 4, &mut rng), gaussian(12, 3, &mut rng))?;
    let quad = check_gradient(&q, &[gaussian(4, 3, &mut rng)], 1.0, 20, &mut rng)?;

    let d = gaussian_blobs(10, 5, 2.0, 1)?;
    let mlp = MlpLoss::new(d.x.clone(), &d.y, 6)?;
    let w = vec![gaussian(5, 6, &mut rng), gaussian(6, 2, &mut rng)];
    let net = check_gradient(&mlp, &w, 0.5, 20, &mut rng)?;
    let wrapped = reparametrize(&mlp, vec![Reparam::random_scale(5, 6, 1.0, 2)?, Reparam::Identity])?;
    let rep = check_gradient(&wrapped, &w, 0.5, 20, &mut rng)?;

    let ok = quad.passes(1e-5) && net.passes(1e-5) && rep.passes(1e-5);
    Ok((
        ok,
        format!(
            "quadratic {:.1e}, mlp {:.1e}, reparametrized mlp {:.1e}",
            quad.max_rel_error, net.max_rel_error, rep.max_rel_error
        ),
    ))
}

pub fn invariance_suite() -> Result<(bool, String)> {
    let vector = vector_reference_suite()?;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let q = QuadraticLoss::new(gaussian(20, 4, &mut rng), gaussian(20, 2, &mut rng))?;
    let w0 = gaussian(4, 2, &mut rng);
    let a = Reparam::random_scale(4, 2, 5.0, 7)?;
    let hp = HyperParams {
        gamma: 1e-3,
        epsilon: 1e-40,
        mode: StepMode::Classic,
        ..HyperParams::default()
    };
    let sania = run_pair(OptimizerKind::AdamSania, &q, vec![a.clone()], vec![w0.clone()], &hp, 50, 1e-8)?;
    let sgd_hp = HyperParams { gamma: 1e-4, ..hp };
    let sgd = run_pair(OptimizerKind::Sgd, &q, vec![a], vec![w0], &sgd_hp, 50, 1e-8)?;
    let ok = vector.all_passed()
        && sania.report.verdict == Verdict::Invariant
        && sgd.report.verdict == Verdict::NotInvariant;
    let failed: Vec<&str> = vector.cases.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok((
        ok,
        format!(
            "reference cases {}/{} (failed: {failed:?}); sania gap {:.1e}; sgd gap {:.1e}",
            vector.cases.len() - failed.len(),
            vector.cases.len(),
            sania.report.max_param_gap,
            sgd.report.max_param_gap
        ),
    ))
}

/// Runs the named suites (all when `only` is `None`).
pub fn run_suites(only: Option<&str>, quintic: &[(f64, f64, f64)]) -> Vec<SuiteOutcome> {
    SUITES
        .iter()
        .filter(|name| only.map_or(true, |o| o == **name))
        .map(|&name| match name {
            "lmo" => timed(name, lmo_suite),
            "polar" => timed(name, || polar_suite(quintic)),
            "linalg" => timed(name, linalg_suite),
            "grad" => timed(name, grad_suite),
            _ => timed(name, invariance_suite),
        })
        .collect()
}
