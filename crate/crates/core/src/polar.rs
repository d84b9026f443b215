//! Polar factor `U·Vᵀ` of a matrix, exactly (through the SVD) or by
//! matrix-multiplication-only polynomial iterations.

use crate::decomp::{svd, sym_eig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Quintic coefficients used by Muon-style implementations.
pub const DEFAULT_QUINTIC: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarKind {
    CubicNs,
    QuinticPoly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarSchedule {
    pub kind: PolarKind,
    /// `(a, b, c)` per iteration; iterations past the end reuse the last triple.
    pub coefficients: Vec<(f64, f64, f64)>,
    pub max_iters: usize,
    pub prenormalize: bool,
}

impl PolarSchedule {
    pub fn cubic(max_iters: usize) -> Self {
        Self {
            kind: PolarKind::CubicNs,
            coefficients: Vec::new(),
            max_iters,
            prenormalize: true,
        }
    }

    pub fn quintic(coefficients: Vec<(f64, f64, f64)>) -> Self {
        Self {
            kind: PolarKind::QuinticPoly,
            max_iters: coefficients.len(),
            coefficients,
            prenormalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("polar schedule needs max_iters >= 1".into()));
        }
        if self.kind == PolarKind::QuinticPoly && self.coefficients.is_empty() {
            return Err(Error::InvalidParameter(
                "quintic schedule needs at least one coefficient triple".into(),
            ));
        }
        Ok(())
    }
}

impl Default for PolarSchedule {
    /// Five quintic steps with the default coefficients.
    fn default() -> Self {
        Self::quintic(vec![DEFAULT_QUINTIC; 5])
    }
}

#[derive(Debug, Clone)]
pub struct PolarOutput {
    pub factor: Matrix,
    /// `‖XᵀX − I_r‖_F` on the smaller Gram restricted to the numerical range
    /// of `X₀`, for `X₀` and after each iteration.
    pub residuals: Vec<f64>,
}

impl PolarOutput {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().expect("at least the initial residual")
    }
}

/// `U_r·V_rᵀ` over the numerically nonzero singular values. For full-rank
/// square input this is the unique orthogonal polar factor.
pub fn polar_exact(g: &Matrix) -> Result<Matrix> {
    if g.is_zero() {
        return Err(Error::ZeroInput { op: "polar_exact" });
    }
    let d = svd(g)?;
    let r = d.rank();
    Matrix::from_fn(g.rows(), g.cols(), |i, j| {
        (0..r).map(|k| d.u.get(i, k) * d.v.get(j, k)).sum()
    })
}

/// Whichever of `XᵀX` / `XXᵀ` is smaller.
fn small_gram(x: &Matrix) -> Result<Matrix> {
    if x.rows() >= x.cols() {
        x.t_matmul(x)
    } else {
        x.matmul_t(x)
    }
}

/// `X·p` where `p` is a polynomial in the small Gram, applied on the matching side.
fn apply_gram_side(x: &Matrix, p: &Matrix) -> Result<Matrix> {
    if x.rows() >= x.cols() {
        x.matmul(p)
    } else {
        p.matmul(x)
    }
}

/// Residuals below this are treated as converged.
const JITTER_FLOOR: f64 = 1e-10;

/// Orthogonal projector onto the numerical range of a Gram matrix. Every
/// iterate's Gram is a polynomial in the first one, so measuring against
/// this projector gives the residual on the row/column space only.
fn range_projector(gram: &Matrix, dim: usize) -> Result<Matrix> {
    let eig = sym_eig(gram)?;
    let top = eig.lambda.iter().copied().fold(0.0, f64::max);
    let cutoff = dim as f64 * f64::EPSILON * top;
    let keep: Vec<usize> = (0..eig.lambda.len()).filter(|&k| eig.lambda[k] > cutoff).collect();
    Matrix::from_fn(gram.rows(), gram.cols(), |i, j| {
        keep.iter().map(|&k| eig.q.get(i, k) * eig.q.get(j, k)).sum()
    })
}

pub fn polar_iterate(g: &Matrix, sched: &PolarSchedule) -> Result<PolarOutput> {
    sched.validate()?;
    if g.is_zero() {
        return Err(Error::ZeroInput { op: "polar_iterate" });
    }
    let mut x = if sched.prenormalize {
        g.scale(1.0 / g.frob_norm())?
    } else {
        g.clone()
    };
    let mut gram = small_gram(&x)?;
    let proj = range_projector(&gram, g.rows().max(g.cols()))?;
    let mut residuals = vec![gram.frob_distance(&proj)];
    let mut rising = 0;

    for k in 0..sched.max_iters {
        let poly = match sched.kind {
            PolarKind::CubicNs => {
                // 1.5·I − 0.5·A
                Matrix::identity(gram.rows()).lin_comb(1.5, &gram, -0.5)?
            }
            PolarKind::QuinticPoly => {
                let (a, b, c) = sched
                    .coefficients
                    .get(k)
                    .or(sched.coefficients.last())
                    .copied()
                    .expect("validated");
                let gram2 = gram.matmul(&gram)?;
                Matrix::identity(gram.rows())
                    .lin_comb(a, &gram, b)?
                    .lin_comb(1.0, &gram2, c)?
            }
        };
        x = apply_gram_side(&x, &poly).map_err(|_| diverged(k + 1, &residuals))?;
        gram = small_gram(&x).map_err(|_| diverged(k + 1, &residuals))?;
        let res = gram.frob_distance(&proj);
        if !res.is_finite() {
            return Err(diverged(k + 1, &residuals));
        }
        let prev = *residuals.last().unwrap();
        residuals.push(res);
        rising = if res > prev { rising + 1 } else { 0 };
        // Quintic schedules oscillate below the starting residual without
        // converging, and converged iterates jitter at roundoff level; only
        // growth past both counts.
        if rising >= 3 && res > residuals[0].max(JITTER_FLOOR) {
            return Err(diverged(k + 1, &residuals));
        }
    }
    Ok(PolarOutput {
        factor: x,
        residuals,
    })
}

fn diverged(iteration: usize, residuals: &[f64]) -> Error {
    Error::PolarDiverged {
        iteration,
        residuals: residuals.to_vec(),
    }
}
