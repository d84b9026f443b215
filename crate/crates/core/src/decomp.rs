//! Singular value and symmetric eigen decompositions for small dense
//! matrices, plus fractional powers of PSD matrices built on them.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-14;

/// `a = u · diag(sigma) · vᵀ` with `r = min(rows, cols)` columns in `u` and `v`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> Result<Matrix> {
        let us = Matrix::from_fn(self.u.rows(), self.u.cols(), |i, j| {
            self.u.get(i, j) * self.sigma[j]
        })?;
        us.matmul_t(&self.v)
    }

    /// Numerical rank: singular values above `max(m, n) · ε · σ_max`.
    pub fn rank(&self) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        let dim = self.u.rows().max(self.v.rows()) as f64;
        let tol = dim * f64::EPSILON * smax;
        self.sigma.iter().filter(|&&s| s > tol && s > 0.0).count()
    }
}

/// `s = q · diag(lambda) · qᵀ`, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub q: Matrix,
    pub lambda: Vec<f64>,
}

impl SymEig {
    pub fn reconstruct(&self) -> Result<Matrix> {
        sym_from_eig(&self.q, &self.lambda)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `q · diag(d) · qᵀ`, computed on the upper triangle and mirrored so the
/// result is exactly symmetric.
fn sym_from_eig(q: &Matrix, d: &[f64]) -> Result<Matrix> {
    let n = q.rows();
    let r = d.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..r {
                s += q.get(i, k) * d[k] * q.get(j, k);
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Matrix::new(n, n, out)
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Columns whose singular value is exactly zero get deterministic
/// Gram–Schmidt completions so `u` always has orthonormal columns.
pub fn svd(a: &Matrix) -> Result<SpectralDecomposition> {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(SpectralDecomposition {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    // Column-major working copies.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = false;
    let mut worst = 0.0;
    for _ in 0..MAX_SWEEPS {
        worst = 0.0_f64;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(off);
                if off <= JACOBI_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            op: "svd",
            iterations: MAX_SWEEPS,
            residual: worst,
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            u_cols.push(cols[j].iter().map(|x| x / s).collect());
        } else {
            let e = complete_orthonormal(&u_cols, m);
            u_cols.push(e);
        }
    }
    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i])?;
    let v = Matrix::from_fn(n, n, |i, j| vcols[order[j]][i])?;
    Ok(SpectralDecomposition { u, sigma, v })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// First standard basis vector with a usable component orthogonal to `basis`.
fn complete_orthonormal(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    for k in 0..dim {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    unreachable!("basis of size {} cannot span R^{dim}", basis.len())
}

/// Symmetric eigendecomposition by cyclic two-sided Jacobi.
pub fn sym_eig(s: &Matrix) -> Result<SymEig> {
    let (rows, cols) = s.shape();
    if rows != cols {
        return Err(Error::NotSquare {
            op: "sym_eig",
            rows,
            cols,
        });
    }
    let asym = s.max_asymmetry();
    if asym > 1e-12 * s.max_abs().max(1.0) {
        return Err(Error::NotSymmetric {
            op: "sym_eig",
            asymmetry: asym,
        });
    }
    let n = rows;
    let mut a: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            0.5 * (s.get(i, j) + s.get(j, i))
        })
        .collect();
    let mut v = Matrix::identity(n).into_vec();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    let off_norm = |a: &[f64]| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[i * n + j] * a[i * n + j];
                }
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= JACOBI_TOL * scale || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "sym_eig",
                iterations: sweeps,
                residual: off / scale,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                // Negligible against both diagonals: drop it.
                let g = 100.0 * apq.abs();
                if sweeps > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]).then(x.cmp(&y)));
    let lambda = order.iter().map(|&i| diag[i]).collect();
    let q = Matrix::from_fn(n, n, |i, j| v[i * n + order[j]])?;
    Ok(SymEig { q, lambda })
}

/// Eigenvalue floor used for inverse roots: `1e-12 · λ_max`, or `1e-12` when
/// the spectrum is non-positive.
pub fn default_floor(lambda_max: f64) -> f64 {
    1e-12 * if lambda_max > 0.0 { lambda_max } else { 1.0 }
}

/// `q · diag(max(λ, floor)^p) · qᵀ` for a symmetric PSD `s`.
pub fn spd_power(s: &Matrix, p: f64, floor: f64) -> Result<Matrix> {
    if floor < 0.0 || !floor.is_finite() {
        return Err(Error::InvalidParameter(format!("eigenvalue floor {floor}")));
    }
    if p < 0.0 && floor == 0.0 {
        return Err(Error::InvalidPower { power: p });
    }
    let eig = sym_eig(s)?;
    spd_power_from_eig(&eig, p, floor)
}

pub fn spd_power_from_eig(eig: &SymEig, p: f64, floor: f64) -> Result<Matrix> {
    let lmax = eig.lambda.first().copied().unwrap_or(0.0);
    let tol = 1e-10 * lmax.abs().max(1.0);
    let mut d = Vec::with_capacity(eig.lambda.len());
    for &l in &eig.lambda {
        if l < -tol {
            return Err(Error::NegativeEigenvalue { value: l });
        }
        let clamped = l.max(floor);
        d.push(if clamped <= 0.0 {
            if p > 0.0 {
                0.0
            } else if p == 0.0 {
                1.0
            } else {
                return Err(Error::InvalidPower { power: p });
            }
        } else {
            clamped.powf(p)
        });
    }
    sym_from_eig(&eig.q, &d)
}
