#![allow(dead_code)]

use precnorm::decomp::svd;
use precnorm::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal)).unwrap()
}

pub fn positive(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5f64..1.5).exp()).unwrap()
}

/// Random orthogonal matrix from Gram–Schmidt on Gaussian columns.
pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i]).unwrap()
}

/// `U·diag(s)·Vᵀ` with random orthogonal factors.
pub fn with_singular_values(s: &[f64], rng: &mut impl Rng) -> Matrix {
    let n = s.len();
    let u = orthogonal(n, rng);
    let v = orthogonal(n, rng);
    u.matmul(&Matrix::diag(s).unwrap()).unwrap().matmul_t(&v).unwrap()
}

/// Square matrix with condition number in `[1, max_cond]`, distinct singular values.
pub fn conditioned(n: usize, max_cond: f64, rng: &mut impl Rng) -> Matrix {
    let cond = rng.random_range(1.0..max_cond);
    let mut s: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            _ if i == n - 1 => 1.0 / cond,
            _ => rng.random_range(1.0 / cond..1.0),
        })
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    with_singular_values(&s, rng)
}

pub fn frob(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

pub fn rel_close(a: &Matrix, b: &Matrix) -> f64 {
    let d = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / frob(a).max(f64::MIN_POSITIVE)
}

pub fn col_norm(t: &Matrix, j: usize) -> f64 {
    (0..t.rows()).map(|i| t.get(i, j).powi(2)).sum::<f64>().sqrt()
}

pub fn row_norm(t: &Matrix, i: usize) -> f64 {
    t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sigma_max(t: &Matrix) -> f64 {
    svd(t).unwrap().sigma[0]
}

pub fn sigma_sum(t: &Matrix) -> f64 {
    svd(t).unwrap().sigma.iter().sum()
}
