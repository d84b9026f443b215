use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objective::Objective;

/// `L(W) = ‖X·W − Y‖_F²` with gradient `2·Xᵀ(X·W − Y)`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub x: Matrix,
    pub y: Matrix,
}

impl QuadraticLoss {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::DimensionMismatch {
                op: "QuadraticLoss::new",
                left: x.shape(),
                right: y.shape(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x.cols(), self.y.cols())
    }

    fn residual(&self, w: &Matrix) -> Result<Matrix> {
        self.x.matmul(w)?.sub(&self.y)
    }

    /// Hessian of the vectorized loss for a single target column: `2·XᵀX`.
    pub fn hessian(&self) -> Result<Matrix> {
        self.x.t_matmul(&self.x)?.scale(2.0)
    }

    /// Least-squares minimizer from the normal equations.
    pub fn minimizer(&self) -> Result<Matrix> {
        self.x.t_matmul(&self.x)?.inverse()?.matmul(&self.x.t_matmul(&self.y)?)
    }
}

impl Objective for QuadraticLoss {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![self.shape()]
    }

    fn loss(&self, params: &[Matrix]) -> Result<f64> {
        self.check_params(params)?;
        let r = self.residual(&params[0])?;
        Ok(r.frob_norm().powi(2))
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        self.check_params(params)?;
        let r = self.residual(&params[0])?;
        let grad = self.x.t_matmul(&r)?.scale(2.0)?;
        Ok((r.frob_norm().powi(2), vec![grad]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_point_and_minimizer() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [2.0], [-1.0]]).unwrap();
        let q = QuadraticLoss::new(x, y.clone()).unwrap();
        let l0 = q.loss(&[Matrix::zeros(2, 1)]).unwrap();
        assert!((l0 - y.frob_norm().powi(2)).abs() < 1e-14);
        let (_, g) = q.loss_and_grad(&[q.minimizer().unwrap()]).unwrap();
        assert!(g[0].max_abs() < 1e-12);
    }
}
