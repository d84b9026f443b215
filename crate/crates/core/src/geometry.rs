//! Base matrix norms, preconditioned norms and their linear minimization
//! oracles.
//!
//! The LMO of a norm returns `argmax_{‖T‖ ≤ ρ} ⟨G, T⟩`; the optimizer step
//! subtracts it. A preconditioned norm `‖P(T)‖` has LMO
//! `P⁻¹(lmo(P⁻ᵀ(G)))`, where `P⁻ᵀ` is the adjoint inverse of `P`.

use crate::decomp::svd;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::polar::{polar_exact, polar_iterate, PolarSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseNorm {
    Frobenius,
    /// Largest singular value.
    Spectral,
    /// `max |g_ij|`, the ℓ1→ℓ∞ operator norm.
    MaxAbs,
    /// Largest column norm.
    ColNorm,
    /// Largest row norm.
    RowNorm,
}

impl BaseNorm {
    pub const ALL: [BaseNorm; 5] = [
        BaseNorm::Frobenius,
        BaseNorm::Spectral,
        BaseNorm::MaxAbs,
        BaseNorm::ColNorm,
        BaseNorm::RowNorm,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralBackend {
    ExactSvd,
    NewtonSchulz(PolarSchedule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmoConfig {
    pub rho: f64,
    pub spectral_backend: SpectralBackend,
    /// Use RMS-normalized operator norms (dimension factors on Spectral,
    /// ColNorm and RowNorm).
    pub rms_scaling: bool,
}

impl Default for LmoConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            spectral_backend: SpectralBackend::ExactSvd,
            rms_scaling: false,
        }
    }
}

impl LmoConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {}", self.rho)));
        }
        if let SpectralBackend::NewtonSchulz(s) = &self.spectral_backend {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity,
    /// Norm of `T` is `‖l·T·r‖`.
    LeftRight { l: Matrix, r: Matrix },
    /// Norm of `T` is `‖d ⊙ T‖`.
    Elementwise(Matrix),
    /// Norm of `T` is `‖inner(outer(T))‖`.
    Composed {
        outer: Box<Preconditioner>,
        inner: Box<Preconditioner>,
    },
}

impl Preconditioner {
    /// Checks that `l` and `r` are square and well conditioned.
    pub fn left_right(l: Matrix, r: Matrix) -> Result<Self> {
        for (name, m) in [("l", &l), ("r", &r)] {
            if !m.is_square() {
                return Err(Error::NotSquare {
                    op: "Preconditioner::left_right",
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
            let sigma = svd(m)?.sigma;
            let (hi, lo) = (sigma[0], *sigma.last().unwrap());
            if !(lo > 1e-12 * hi) {
                return Err(Error::InvalidParameter(format!(
                    "{name} is numerically singular (sigma range {lo:e}..{hi:e})"
                )));
            }
        }
        Ok(Self::LeftRight { l, r })
    }

    /// Checks that every entry of `d` is strictly positive.
    pub fn elementwise(d: Matrix) -> Result<Self> {
        check_positive("Preconditioner::elementwise", &d)?;
        Ok(Self::Elementwise(d))
    }

    pub fn composed(outer: Preconditioner, inner: Preconditioner) -> Self {
        Self::Composed {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::LeftRight { .. } => "left-right",
            Self::Elementwise(_) => "elementwise",
            Self::Composed { .. } => "composed",
        }
    }

    /// `P(T)`: the map whose base norm defines the preconditioned norm.
    pub fn apply(&self, t: &Matrix) -> Result<Matrix> {
        match self {
            Self::Identity => Ok(t.clone()),
            Self::LeftRight { l, r } => l.matmul(t)?.matmul(r),
            Self::Elementwise(d) => d.hadamard(t),
            Self::Composed { outer, inner } => inner.apply(&outer.apply(t)?),
        }
    }

    /// `P⁻¹(P⁻ᵀ(G))`: the unnormalized preconditioned gradient, e.g.
    /// `(LᵀL)⁻¹·G·(RRᵀ)⁻¹` or `G / D²`.
    pub fn precondition(&self, g: &Matrix) -> Result<Matrix> {
        self.check_shape(g.shape())?;
        self.from_primal_space(&self.to_dual_space(g)?)
    }

    /// `P⁻ᵀ(G)`: pulls a gradient into the preconditioned space.
    fn to_dual_space(&self, g: &Matrix) -> Result<Matrix> {
        match self {
            Self::Identity => Ok(g.clone()),
            Self::LeftRight { l, r } => {
                let li = l.inverse()?;
                let ri = r.inverse()?;
                li.t_matmul(g)?.matmul_t(&ri)
            }
            Self::Elementwise(d) => g.hadamard_div(d),
            Self::Composed { outer, inner } => inner.to_dual_space(&outer.to_dual_space(g)?),
        }
    }

    /// `P⁻¹(T)`: maps a step from the preconditioned space back.
    fn from_primal_space(&self, t: &Matrix) -> Result<Matrix> {
        match self {
            Self::Identity => Ok(t.clone()),
            Self::LeftRight { l, r } => l.inverse()?.matmul(t)?.matmul(&r.inverse()?),
            Self::Elementwise(d) => t.hadamard_div(d),
            Self::Composed { outer, inner } => {
                outer.from_primal_space(&inner.from_primal_space(t)?)
            }
        }
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        let (m, n) = shape;
        match self {
            Self::Identity => Ok(()),
            Self::LeftRight { l, r } => {
                if l.shape() != (m, m) {
                    return Err(Error::DimensionMismatch {
                        op: "preconditioner (left)",
                        left: l.shape(),
                        right: shape,
                    });
                }
                if r.shape() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        op: "preconditioner (right)",
                        left: r.shape(),
                        right: shape,
                    });
                }
                Ok(())
            }
            Self::Elementwise(d) => {
                if d.shape() != shape {
                    return Err(Error::DimensionMismatch {
                        op: "preconditioner (elementwise)",
                        left: d.shape(),
                        right: shape,
                    });
                }
                check_positive("preconditioner (elementwise)", d)
            }
            Self::Composed { outer, inner } => {
                outer.check_shape(shape)?;
                inner.check_shape(shape)
            }
        }
    }
}

fn check_positive(op: &'static str, d: &Matrix) -> Result<()> {
    for i in 0..d.rows() {
        for j in 0..d.cols() {
            let value = d.get(i, j);
            if value <= 0.0 {
                return Err(Error::NonPositive {
                    op,
                    row: i,
                    col: j,
                    value,
                });
            }
        }
    }
    Ok(())
}

fn l2(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| x * x).sum::<f64>().sqrt()
}

fn col_norms(g: &Matrix) -> Vec<f64> {
    (0..g.cols())
        .map(|j| l2((0..g.rows()).map(|i| g.get(i, j))))
        .collect()
}

fn row_norms(g: &Matrix) -> Vec<f64> {
    (0..g.rows()).map(|i| l2(g.row(i).iter().copied())).collect()
}

/// Factor `c` such that the base norm is `c` times the plain operator norm.
fn dim_factor(shape: (usize, usize), base: BaseNorm, rms_scaling: bool) -> f64 {
    let (m, n) = (shape.0 as f64, shape.1 as f64);
    match (base, rms_scaling) {
        (_, false) | (BaseNorm::Frobenius, _) | (BaseNorm::MaxAbs, _) => 1.0,
        (BaseNorm::Spectral, true) => (m / n).sqrt(),
        (BaseNorm::ColNorm, true) => 1.0 / m.sqrt(),
        (BaseNorm::RowNorm, true) => n.sqrt(),
    }
}

pub fn eval_base_norm(g: &Matrix, base: BaseNorm, rms_scaling: bool) -> Result<f64> {
    let c = dim_factor(g.shape(), base, rms_scaling);
    let raw = match base {
        BaseNorm::Frobenius => g.frob_norm(),
        BaseNorm::Spectral => svd(g)?.sigma[0],
        BaseNorm::MaxAbs => g.max_abs(),
        BaseNorm::ColNorm => col_norms(g).into_iter().fold(0.0, f64::max),
        BaseNorm::RowNorm => row_norms(g).into_iter().fold(0.0, f64::max),
    };
    Ok(c * raw)
}

/// Dual of the base norm, so that `⟨g, lmo_base(g)⟩ = ρ · dual_norm(g)`.
pub fn dual_norm(g: &Matrix, base: BaseNorm, rms_scaling: bool) -> Result<f64> {
    let c = dim_factor(g.shape(), base, rms_scaling);
    let raw = match base {
        BaseNorm::Frobenius => g.frob_norm(),
        BaseNorm::Spectral => svd(g)?.sigma.iter().sum(),
        BaseNorm::MaxAbs => g.sum_abs(),
        BaseNorm::ColNorm => col_norms(g).iter().sum(),
        BaseNorm::RowNorm => row_norms(g).iter().sum(),
    };
    Ok(raw / c)
}

pub fn eval_precond_norm(
    g: &Matrix,
    p: &Preconditioner,
    base: BaseNorm,
    rms_scaling: bool,
) -> Result<f64> {
    p.check_shape(g.shape())?;
    eval_base_norm(&p.apply(g)?, base, rms_scaling)
}

/// An LMO result. `degenerate` is set when the input was zero, in which case
/// every feasible point is optimal and the zero matrix is returned.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmo {
    pub direction: Matrix,
    pub degenerate: bool,
}

impl Lmo {
    fn degenerate(shape: (usize, usize)) -> Self {
        Self {
            direction: Matrix::zeros(shape.0, shape.1),
            degenerate: true,
        }
    }
}

pub fn lmo_base(g: &Matrix, base: BaseNorm, cfg: &LmoConfig) -> Result<Lmo> {
    cfg.validate()?;
    if g.is_zero() {
        return Ok(Lmo::degenerate(g.shape()));
    }
    let (m, n) = g.shape();
    let rho = cfg.rho;
    let c = dim_factor(g.shape(), base, cfg.rms_scaling);
    let direction = match base {
        BaseNorm::Frobenius => g.scale(rho / g.frob_norm())?,
        BaseNorm::Spectral => {
            let polar = match &cfg.spectral_backend {
                SpectralBackend::ExactSvd => polar_exact(g)?,
                SpectralBackend::NewtonSchulz(s) => polar_iterate(g, s)?.factor,
            };
            polar.scale(rho / c)?
        }
        BaseNorm::MaxAbs => g.map("lmo_base", |x| {
            if x > 0.0 {
                rho
            } else if x < 0.0 {
                -rho
            } else {
                0.0
            }
        })?,
        BaseNorm::ColNorm => {
            let norms = col_norms(g);
            Matrix::from_fn(m, n, |i, j| {
                if norms[j] > 0.0 {
                    rho / c * g.get(i, j) / norms[j]
                } else {
                    0.0
                }
            })?
        }
        BaseNorm::RowNorm => {
            let norms = row_norms(g);
            Matrix::from_fn(m, n, |i, j| {
                if norms[i] > 0.0 {
                    rho / c * g.get(i, j) / norms[i]
                } else {
                    0.0
                }
            })?
        }
    };
    Ok(Lmo {
        direction,
        degenerate: false,
    })
}

/// LMO of the preconditioned norm `‖P(T)‖`: `P⁻¹(lmo_base(P⁻ᵀ(g)))`.
pub fn lmo_precond(
    g: &Matrix,
    p: &Preconditioner,
    base: BaseNorm,
    cfg: &LmoConfig,
) -> Result<Lmo> {
    p.check_shape(g.shape())?;
    if g.is_zero() {
        cfg.validate()?;
        return Ok(Lmo::degenerate(g.shape()));
    }
    let inner = lmo_base(&p.to_dual_space(g)?, base, cfg)?;
    if inner.degenerate {
        return Ok(inner);
    }
    Ok(Lmo {
        direction: p.from_primal_space(&inner.direction)?,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn base_norm_examples() {
        let d = Matrix::diag(&[3.0, 1.0]).unwrap();
        assert!((eval_base_norm(&d, BaseNorm::Spectral, false).unwrap() - 3.0).abs() < 1e-15);
        let g = m(&[&[2.0, -5.0]]);
        assert_eq!(eval_base_norm(&g, BaseNorm::MaxAbs, false).unwrap(), 5.0);
        assert_eq!(eval_base_norm(&m(&[&[3.0, 4.0]]), BaseNorm::Frobenius, false).unwrap(), 5.0);
    }

    #[test]
    fn precond_norm_examples() {
        let g = m(&[&[1.0, -2.0], &[0.5, 3.0]]);
        for base in BaseNorm::ALL {
            let plain = eval_base_norm(&g, base, false).unwrap();
            let id = eval_precond_norm(&g, &Preconditioner::Identity, base, false).unwrap();
            assert_eq!(plain, id);
        }
        let p = Preconditioner::left_right(Matrix::identity(2).scale(2.0).unwrap(), Matrix::identity(2))
            .unwrap();
        let doubled = eval_precond_norm(&g, &p, BaseNorm::Frobenius, false).unwrap();
        assert!((doubled - 2.0 * g.frob_norm()).abs() < 1e-14);

        let d = Preconditioner::elementwise(m(&[&[1.0, 2.0]])).unwrap();
        let val = eval_precond_norm(&m(&[&[3.0, 4.0]]), &d, BaseNorm::Frobenius, false).unwrap();
        assert!((val - 73f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn lmo_base_examples() {
        let cfg = LmoConfig::default();
        let f = lmo_base(&m(&[&[3.0, 4.0]]), BaseNorm::Frobenius, &cfg).unwrap();
        assert!(f.direction.frob_distance(&m(&[&[0.6, 0.8]])) < 1e-15);

        let s = lmo_base(&m(&[&[0.0, -3.0], &[2.0, 0.0]]), BaseNorm::Spectral, &cfg).unwrap();
        assert!(s.direction.frob_distance(&m(&[&[0.0, -1.0], &[1.0, 0.0]])) < 1e-14);

        let sign = lmo_base(&m(&[&[2.0, -3.0], &[0.0, 1.0]]), BaseNorm::MaxAbs, &cfg).unwrap();
        assert_eq!(sign.direction, m(&[&[1.0, -1.0], &[0.0, 1.0]]));
    }

    #[test]
    fn zero_gradient_is_degenerate() {
        let z = Matrix::zeros(2, 3);
        for base in BaseNorm::ALL {
            let out = lmo_base(&z, base, &LmoConfig::default()).unwrap();
            assert!(out.degenerate);
            assert!(out.direction.is_zero());
        }
    }

    #[test]
    fn lmo_precond_elementwise_example() {
        let d = Preconditioner::elementwise(m(&[&[1.0, 2.0]])).unwrap();
        let out = lmo_precond(&m(&[&[2.0, 2.0]]), &d, BaseNorm::Frobenius, &LmoConfig::default())
            .unwrap();
        let s = 1.0 / 5f64.sqrt();
        assert!(out.direction.frob_distance(&m(&[&[2.0 * s, 0.5 * s]])) < 1e-15);
    }

    #[test]
    fn col_and_row_norm_lmo_hit_the_boundary() {
        let g = m(&[&[1.0, 0.0, -2.0], &[2.0, 0.0, 1.0]]);
        for rms in [false, true] {
            let cfg = LmoConfig {
                rms_scaling: rms,
                ..LmoConfig::with_rho(0.7)
            };
            for base in [BaseNorm::ColNorm, BaseNorm::RowNorm, BaseNorm::Spectral] {
                let t = lmo_base(&g, base, &cfg).unwrap().direction;
                let norm = eval_base_norm(&t, base, rms).unwrap();
                assert!((norm - 0.7).abs() < 1e-12, "{base:?} rms={rms}: {norm}");
                let value = g.frob_inner(&t).unwrap();
                let dual = dual_norm(&g, base, rms).unwrap();
                assert!((value - 0.7 * dual).abs() < 1e-12);
            }
        }
        // the zero column stays zero
        let t = lmo_base(&g, BaseNorm::ColNorm, &LmoConfig::default()).unwrap().direction;
        assert_eq!(t.column(1), vec![0.0, 0.0]);
    }

    #[test]
    fn constructors_validate() {
        assert!(Preconditioner::elementwise(m(&[&[1.0, 0.0]])).is_err());
        let singular = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(Preconditioner::left_right(singular, Matrix::identity(2)).is_err());
        assert!(LmoConfig::with_rho(0.0).validate().is_err());
    }

    #[test]
    fn shape_mismatch_reported() {
        let p = Preconditioner::Elementwise(Matrix::filled(2, 2, 1.0));
        let g = Matrix::filled(2, 3, 1.0);
        assert!(matches!(
            lmo_precond(&g, &p, BaseNorm::Frobenius, &LmoConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
