//! Differentiable losses over a list of matrix parameter blocks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub trait Objective: Sync {
    /// Shapes of the parameter blocks, in order.
    fn shapes(&self) -> Vec<(usize, usize)>;

    fn loss(&self, params: &[Matrix]) -> Result<f64>;

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)>;

    /// Held-out quality measure (test accuracy for classifiers).
    fn metric(&self, _params: &[Matrix]) -> Result<Option<f64>> {
        Ok(None)
    }

    fn check_params(&self, params: &[Matrix]) -> Result<()> {
        let shapes = self.shapes();
        if params.len() != shapes.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameter blocks, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (p, &s) in params.iter().zip(&shapes) {
            if p.shape() != s {
                return Err(Error::DimensionMismatch {
                    op: "objective parameters",
                    left: p.shape(),
                    right: s,
                });
            }
        }
        Ok(())
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn shapes(&self) -> Vec<(usize, usize)> {
        (**self).shapes()
    }
    fn loss(&self, params: &[Matrix]) -> Result<f64> {
        (**self).loss(params)
    }
    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        (**self).loss_and_grad(params)
    }
    fn metric(&self, params: &[Matrix]) -> Result<Option<f64>> {
        (**self).metric(params)
    }
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub probes: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares the analytic gradient with central differences.
///
/// Each probe draws a point as `params + spread·N(0, 1)` and checks the
/// directional derivative along a random Gaussian direction plus three
/// single coordinates. Differences use `h = 1e-6·(1 + |entry|)`, with the
/// direction scaled by `1e-6·(1 + max |entry|)`. Coordinate errors are taken
/// relative to the largest gradient entry, since a tiny partial derivative
/// cannot be resolved from loss differences at that `h`.
pub fn check_gradient<R: Rng>(
    obj: &dyn Objective,
    params: &[Matrix],
    spread: f64,
    probes: usize,
    rng: &mut R,
) -> Result<GradCheck> {
    obj.check_params(params)?;
    let mut worst = 0.0_f64;
    let mut count = 0;
    for _ in 0..probes {
        let point: Vec<Matrix> = params
            .iter()
            .map(|p| {
                Matrix::from_fn(p.rows(), p.cols(), |i, j| {
                    p.get(i, j) + spread * rng.sample::<f64, _>(StandardNormal)
                })
            })
            .collect::<Result<_>>()?;
        let (_, grad) = obj.loss_and_grad(&point)?;

        // Directional derivative.
        let dir: Vec<Matrix> = point
            .iter()
            .map(|p| Matrix::from_fn(p.rows(), p.cols(), |_, _| rng.sample(StandardNormal)))
            .collect::<Result<_>>()?;
        let scale = point.iter().map(Matrix::max_abs).fold(0.0, f64::max);
        let h = 1e-6 * (1.0 + scale);
        let shifted = |s: f64| -> Result<Vec<Matrix>> {
            point
                .iter()
                .zip(&dir)
                .map(|(p, d)| p.lin_comb(1.0, d, s))
                .collect()
        };
        let fd = (obj.loss(&shifted(h)?)? - obj.loss(&shifted(-h)?)?) / (2.0 * h);
        let an: f64 = grad
            .iter()
            .zip(&dir)
            .map(|(g, d)| g.frob_inner(d))
            .sum::<Result<f64>>()?;
        worst = worst.max(rel_error(fd, an));
        count += 1;

        // A few coordinates.
        for _ in 0..3 {
            let b = rng.random_range(0..point.len());
            let (rows, cols) = point[b].shape();
            let (i, j) = (rng.random_range(0..rows), rng.random_range(0..cols));
            let x = point[b].get(i, j);
            let h = 1e-6 * (1.0 + x.abs());
            let bump = |s: f64| -> Result<Vec<Matrix>> {
                let mut q = point.clone();
                let mut data = q[b].clone().into_vec();
                data[i * cols + j] = x + s;
                q[b] = Matrix::new(rows, cols, data)?;
                Ok(q)
            };
            let fd = (obj.loss(&bump(h)?)? - obj.loss(&bump(-h)?)?) / (2.0 * h);
            let an = grad[b].get(i, j);
            let gscale = grad.iter().map(Matrix::max_abs).fold(0.0, f64::max);
            worst = worst.max(rel_error_floor(fd, an, gscale));
            count += 1;
        }
    }
    Ok(GradCheck {
        probes: count,
        max_rel_error: worst,
    })
}

fn rel_error(fd: f64, an: f64) -> f64 {
    rel_error_floor(fd, an, 0.0)
}

/// `|fd − an| / max(|fd|, |an|, floor)`, zero when both vanish.
fn rel_error_floor(fd: f64, an: f64, floor: f64) -> f64 {
    let denom = fd.abs().max(an.abs()).max(floor);
    if denom == 0.0 {
        0.0
    } else {
        (fd - an).abs() / denom
    }
}
