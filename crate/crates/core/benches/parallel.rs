use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use precnorm::geometry::{lmo_precond, BaseNorm, LmoConfig, Preconditioner};
use precnorm::invariance::{reparametrize, run_pair_with, Reparam};
use precnorm::objective::Objective;
use precnorm::optim::{HyperParams, OptimizerKind, StepMode};
use precnorm::par::{self, Execution};
use precnorm::tasks::{gaussian_blobs, init_mlp_params, MlpLoss};
use precnorm::Matrix;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b) = (random(256, 256, &mut rng), random(256, 256, &mut rng));
    let mut group = c.benchmark_group("matmul_256");
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |bench, &exec| {
            bench.iter(|| a.matmul_with(&b, exec).unwrap())
        });
    }
    group.finish();
}

fn mlp_gradient(c: &mut Criterion) {
    let d = gaussian_blobs(2000, 32, 2.0, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = vec![random(32, 100, &mut rng), init_mlp_params(32, 100, 2, 18).remove(1)];
    let mut group = c.benchmark_group("mlp_grad_2000x32_h100");
    for exec in MODES {
        let mlp = MlpLoss::new(d.x.clone(), &d.y, 100).unwrap().with_execution(exec);
        group.bench_function(format!("{exec:?}"), |bench| bench.iter(|| mlp.loss_and_grad(&params).unwrap()));
    }
    group.finish();
}

fn lmo_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<(Matrix, Preconditioner)> = (0..200)
        .map(|_| {
            let g = random(3, 4, &mut rng);
            let l = random(3, 3, &mut rng).add(&Matrix::identity(3).scale(3.0).unwrap()).unwrap();
            let r = random(4, 4, &mut rng).add(&Matrix::identity(4).scale(3.0).unwrap()).unwrap();
            (g, Preconditioner::left_right(l, r).unwrap())
        })
        .collect();
    let cfg = LmoConfig::default();
    let mut group = c.benchmark_group("lmo_precond_spectral_x200");
    for exec in MODES {
        group.bench_function(format!("{exec:?}"), |bench| {
            bench.iter(|| par::map(exec, &cases, |(g, p)| lmo_precond(g, p, BaseNorm::Spectral, &cfg).unwrap()))
        });
    }
    group.finish();
}

fn invariance_pair(c: &mut Criterion) {
    let d = gaussian_blobs(400, 16, 2.0, 7).unwrap();
    let mlp = MlpLoss::new(d.x.clone(), &d.y, 100).unwrap().with_execution(Execution::Sequential);
    let reparams = vec![Reparam::random_scale(16, 100, 1.0, 18).unwrap(), Reparam::Identity];
    let scaled = reparametrize(&mlp, reparams.clone()).unwrap();
    let hp = HyperParams {
        gamma: 1e-3,
        epsilon: 1e-40,
        mode: StepMode::Classic,
        ..HyperParams::default()
    };
    let w0 = init_mlp_params(16, 100, 2, 18);
    let mut group = c.benchmark_group("run_pair_adam_sania_50_steps");
    group.sample_size(10);
    for exec in MODES {
        group.bench_function(format!("{exec:?}"), |bench| {
            bench.iter(|| {
                run_pair_with(OptimizerKind::AdamSania, &mlp, &scaled, &reparams, w0.clone(), &hp, 50, 1e-6, exec)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, mlp_gradient, lmo_batch, invariance_pair);
criterion_main!(benches);
