//! Affine and scale reparameterizations, paired-trajectory runs and the
//! preconditioner transformation rules that make a step invariant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomp::svd;
use crate::error::{Error, Result};
use crate::geometry::Preconditioner;
use crate::matrix::Matrix;
use crate::objective::Objective;
use crate::optim::{HyperParams, OptimizerKind, StepMode};
use crate::par::{self, Execution};
use crate::tasks::QuadraticLoss;
use crate::train::{run_trajectory, RunOptions, Trajectory};

/// Largest condition number accepted for affine factors.
pub const MAX_CONDITION: f64 = 1e8;

/// Tolerance of [`check_theorem2_conditions`].
pub const CONDITION_TOL: f64 = 1e-9;

/// Maps new coordinates `W'` to original ones: `A_L·W'·A_R` or `A⊙W'`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reparam {
    Identity,
    AffineLR { a_l: Matrix, a_r: Matrix },
    ElementwiseScale(Matrix),
}

fn condition_number(a: &Matrix) -> Result<f64> {
    let s = svd(a)?;
    let max = s.sigma.first().copied().unwrap_or(0.0);
    let min = s.sigma.last().copied().unwrap_or(0.0);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

impl Reparam {
    pub fn affine(a_l: Matrix, a_r: Matrix) -> Result<Self> {
        for a in [&a_l, &a_r] {
            if !a.is_square() {
                return Err(Error::NotSquare {
                    op: "Reparam::affine",
                    rows: a.rows(),
                    cols: a.cols(),
                });
            }
            let cond = condition_number(a)?;
            if cond > MAX_CONDITION {
                return Err(Error::InvalidParameter(format!(
                    "affine factor has condition number {cond:e} > {MAX_CONDITION:e}"
                )));
            }
        }
        Ok(Reparam::AffineLR { a_l, a_r })
    }

    pub fn scale(a: Matrix) -> Result<Self> {
        a.hadamard_inv()?;
        Ok(Reparam::ElementwiseScale(a))
    }

    /// `aᵢⱼ = exp(uᵢⱼ)` with `uᵢⱼ ~ U[−k, k]`.
    pub fn random_scale(rows: usize, cols: usize, k: f64, seed: u64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale bound k = {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(rows, cols, |_, _| {
            if k == 0.0 {
                1.0
            } else {
                rng.random_range(-k..=k).exp()
            }
        })?;
        Reparam::scale(a)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Reparam::Identity => "identity",
            Reparam::AffineLR { .. } => "affine",
            Reparam::ElementwiseScale(_) => "scale",
        }
    }

    fn check_shape(&self, w: &Matrix) -> Result<()> {
        let ok = match self {
            Reparam::Identity => true,
            Reparam::AffineLR { a_l, a_r } => a_l.cols() == w.rows() && w.cols() == a_r.rows(),
            Reparam::ElementwiseScale(a) => a.shape() == w.shape(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                op: "reparam",
                left: w.shape(),
                right: match self {
                    Reparam::AffineLR { a_l, a_r } => (a_l.rows(), a_r.cols()),
                    Reparam::ElementwiseScale(a) => a.shape(),
                    Reparam::Identity => w.shape(),
                },
            })
        }
    }

    /// New coordinates to original ones.
    pub fn forward(&self, w: &Matrix) -> Result<Matrix> {
        self.check_shape(w)?;
        match self {
            Reparam::Identity => Ok(w.clone()),
            Reparam::AffineLR { a_l, a_r } => a_l.matmul(w)?.matmul(a_r),
            Reparam::ElementwiseScale(a) => a.hadamard(w),
        }
    }

    /// Original coordinates to new ones.
    pub fn inverse(&self, w: &Matrix) -> Result<Matrix> {
        self.check_shape(w)?;
        match self {
            Reparam::Identity => Ok(w.clone()),
            Reparam::AffineLR { a_l, a_r } => a_l.inverse()?.matmul(w)?.matmul(&a_r.inverse()?),
            Reparam::ElementwiseScale(a) => w.hadamard_div(a),
        }
    }

    /// Chain rule: a gradient in original coordinates pulled back to new ones.
    pub fn pullback(&self, g: &Matrix) -> Result<Matrix> {
        self.check_shape(g)?;
        match self {
            Reparam::Identity => Ok(g.clone()),
            Reparam::AffineLR { a_l, a_r } => a_l.t_matmul(g)?.matmul_t(a_r),
            Reparam::ElementwiseScale(a) => a.hadamard(g),
        }
    }
}

fn map_blocks(
    reparams: &[Reparam],
    ws: &[Matrix],
    f: impl Fn(&Reparam, &Matrix) -> Result<Matrix>,
) -> Result<Vec<Matrix>> {
    if reparams.len() != ws.len() {
        return Err(Error::InvalidParameter(format!(
            "{} reparams for {} parameter blocks",
            reparams.len(),
            ws.len()
        )));
    }
    reparams.iter().zip(ws).map(|(r, w)| f(r, w)).collect()
}

/// `𝓛_new(W') = 𝓛(T(W'))`, one reparam per parameter block.
#[derive(Debug, Clone)]
pub struct Reparametrized<O> {
    inner: O,
    reparams: Vec<Reparam>,
}

pub fn reparametrize<O: Objective>(inner: O, reparams: Vec<Reparam>) -> Result<Reparametrized<O>> {
    let shapes = inner.shapes();
    if shapes.len() != reparams.len() {
        return Err(Error::InvalidParameter(format!(
            "{} reparams for {} parameter blocks",
            reparams.len(),
            shapes.len()
        )));
    }
    for (r, &(m, n)) in reparams.iter().zip(&shapes) {
        r.check_shape(&Matrix::zeros(m, n))?;
    }
    Ok(Reparametrized { inner, reparams })
}

impl<O> Reparametrized<O> {
    pub fn reparams(&self) -> &[Reparam] {
        &self.reparams
    }

    pub fn to_original(&self, ws: &[Matrix]) -> Result<Vec<Matrix>> {
        map_blocks(&self.reparams, ws, Reparam::forward)
    }

    pub fn to_new(&self, ws: &[Matrix]) -> Result<Vec<Matrix>> {
        map_blocks(&self.reparams, ws, Reparam::inverse)
    }
}

impl<O: Objective> Objective for Reparametrized<O> {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.inner.shapes()
    }

    fn loss(&self, params: &[Matrix]) -> Result<f64> {
        self.inner.loss(&self.to_original(params)?)
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        let (loss, g) = self.inner.loss_and_grad(&self.to_original(params)?)?;
        Ok((loss, map_blocks(&self.reparams, &g, Reparam::pullback)?))
    }

    fn metric(&self, params: &[Matrix]) -> Result<Option<f64>> {
        self.inner.metric(&self.to_original(params)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Invariant,
    NotInvariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub max_loss_gap: f64,
    /// Relative Frobenius gap between `T(W'_t)` and `W_t`, all blocks stacked.
    pub max_param_gap: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub steps: usize,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct PairRun {
    pub original: Trajectory,
    pub transformed: Trajectory,
    pub report: InvarianceReport,
}

fn gap_or_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

fn relative_gap(reference: &[Matrix], other: &[Matrix]) -> Result<f64> {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in reference.iter().zip(other) {
        diff += a.frob_distance(b).powi(2);
        norm += a.frob_norm().powi(2);
    }
    let (diff, norm) = (diff.sqrt(), norm.sqrt());
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

/// Runs `kind` on `obj` from `w0` and on the reparameterized loss from the
/// consistently transformed start, then compares the two trajectories.
pub fn run_pair(
    kind: OptimizerKind,
    obj: &dyn Objective,
    reparams: Vec<Reparam>,
    w0: Vec<Matrix>,
    hp: &HyperParams,
    steps: u64,
    tolerance: f64,
) -> Result<PairRun> {
    let new = reparametrize(obj, reparams.clone())?;
    run_pair_with(kind, obj, &new, &reparams, w0, hp, steps, tolerance, Execution::default())
}

/// Like [`run_pair`], but with the new loss supplied directly, e.g. a model
/// trained on rescaled data. `obj_new(W')` must equal `obj(T(W'))`.
#[allow(clippy::too_many_arguments)]
pub fn run_pair_with(
    kind: OptimizerKind,
    obj: &dyn Objective,
    obj_new: &dyn Objective,
    reparams: &[Reparam],
    w0: Vec<Matrix>,
    hp: &HyperParams,
    steps: u64,
    tolerance: f64,
    exec: Execution,
) -> Result<PairRun> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance}")));
    }
    let w0_new = map_blocks(reparams, &w0, Reparam::inverse)?;
    let opts = RunOptions {
        steps,
        keep_params: true,
        evaluate_metric: true,
    };
    let (original, transformed) = par::join(
        exec,
        || run_trajectory(kind, obj, w0, hp, opts),
        || run_trajectory(kind, obj_new, w0_new, hp, opts),
    );
    let (mut original, mut transformed) = (original?, transformed?);

    let diverged = original.diverged_at.is_some() || transformed.diverged_at.is_some();
    let mut max_loss_gap = gap_or_inf((original.initial_loss - transformed.initial_loss).abs());
    let mut max_param_gap = 0.0_f64;
    for (a, b) in original.records.iter().zip(&transformed.records) {
        max_loss_gap = max_loss_gap.max(gap_or_inf((a.loss - b.loss).abs()));
    }
    for (w, w_new) in original.snapshots.iter().zip(&transformed.snapshots) {
        let mapped = map_blocks(reparams, w_new, Reparam::forward);
        let gap = match mapped {
            Ok(m) => relative_gap(w, &m)?,
            Err(_) => f64::INFINITY,
        };
        max_param_gap = max_param_gap.max(gap_or_inf(gap));
    }
    if original.records.len() != transformed.records.len() {
        max_loss_gap = f64::INFINITY;
        max_param_gap = f64::INFINITY;
    }
    let verdict = if !diverged && max_loss_gap <= tolerance && max_param_gap <= tolerance {
        Verdict::Invariant
    } else {
        Verdict::NotInvariant
    };
    let report = InvarianceReport {
        max_loss_gap,
        max_param_gap,
        verdict,
        tolerance,
        steps: original.records.len().min(transformed.records.len()),
        diverged,
    };
    original.snapshots.clear();
    transformed.snapshots.clear();
    Ok(PairRun {
        original,
        transformed,
        report,
    })
}

fn rel_err(expected: &Matrix, got: &Matrix) -> f64 {
    let norm = expected.frob_norm();
    let d = expected.frob_distance(got);
    if norm > 0.0 {
        d / norm
    } else {
        d
    }
}

/// Whether the preconditioner for the new loss is the transformed one:
/// `L' = L·A_L`, `R' = A_R·R` for affine reparams, `D' = A⊙D` for scale.
pub fn check_theorem2_conditions(
    precond_for_loss: &Preconditioner,
    precond_for_new: &Preconditioner,
    r: &Reparam,
) -> Result<bool> {
    if precond_for_loss.tag() != precond_for_new.tag() {
        return Err(Error::TagMismatch(format!(
            "{} vs {}",
            precond_for_loss.tag(),
            precond_for_new.tag()
        )));
    }
    use Preconditioner as P;
    match (precond_for_loss, precond_for_new, r) {
        (P::Identity, P::Identity, Reparam::Identity) => Ok(true),
        (P::Identity, P::Identity, Reparam::AffineLR { a_l, a_r }) => Ok(
            rel_err(&Matrix::identity(a_l.rows()), a_l) <= CONDITION_TOL
                && rel_err(&Matrix::identity(a_r.rows()), a_r) <= CONDITION_TOL,
        ),
        (P::Identity, P::Identity, Reparam::ElementwiseScale(a)) => {
            Ok(rel_err(&Matrix::filled(a.rows(), a.cols(), 1.0), a) <= CONDITION_TOL)
        }
        (P::LeftRight { l, r: rr }, P::LeftRight { l: l2, r: r2 }, Reparam::Identity) => {
            Ok(rel_err(l, l2) <= CONDITION_TOL && rel_err(rr, r2) <= CONDITION_TOL)
        }
        (P::LeftRight { l, r: rr }, P::LeftRight { l: l2, r: r2 }, Reparam::AffineLR { a_l, a_r }) => {
            Ok(rel_err(&l.matmul(a_l)?, l2) <= CONDITION_TOL
                && rel_err(&a_r.matmul(rr)?, r2) <= CONDITION_TOL)
        }
        (P::Elementwise(d), P::Elementwise(d2), Reparam::Identity) => {
            Ok(rel_err(d, d2) <= CONDITION_TOL)
        }
        (P::Elementwise(d), P::Elementwise(d2), Reparam::ElementwiseScale(a)) => {
            Ok(rel_err(&a.hadamard(d)?, d2) <= CONDITION_TOL)
        }
        _ => Err(Error::TagMismatch(format!(
            "{} preconditioners cannot express a {} reparam",
            precond_for_loss.tag(),
            r.tag()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorCase {
    pub name: &'static str,
    pub expect_invariant: bool,
    pub max_param_gap: f64,
    pub max_loss_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSuiteReport {
    pub cases: Vec<VectorCase>,
}

impl VectorSuiteReport {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

/// Gap required of an invariant method.
pub const VECTOR_INVARIANT_TOL: f64 = 1e-10;
/// Gap a non-invariant method must exceed.
pub const VECTOR_BREAK_MIN: f64 = 1e-3;

fn vector_fixture() -> Result<(QuadraticLoss, Matrix)> {
    let x = Matrix::from_rows(&[[1.0, 0.3], [0.4, 1.2], [-0.5, 0.8], [0.9, -0.2]])?;
    let y = Matrix::from_rows(&[[1.0], [-0.5], [0.25], [2.0]])?;
    let w0 = Matrix::from_rows(&[[0.7], [-1.1]])?;
    Ok((QuadraticLoss::new(x, y)?, w0))
}

/// Full-Hessian Newton in original and `A`-transformed coordinates.
fn newton_case(q: &QuadraticLoss, a: &Matrix, w0: &Matrix, steps: usize) -> Result<(f64, f64)> {
    let q_new = QuadraticLoss::new(q.x.matmul(a)?, q.y.clone())?;
    let h_inv = q.hessian()?.inverse()?;
    let h_new_inv = q_new.hessian()?.inverse()?;
    let mut w = w0.clone();
    let mut w_new = a.inverse()?.matmul(w0)?;
    let (mut param_gap, mut loss_gap) = (0.0_f64, 0.0_f64);
    for _ in 0..steps {
        let (_, g) = q.loss_and_grad(std::slice::from_ref(&w))?;
        let (_, g_new) = q_new.loss_and_grad(std::slice::from_ref(&w_new))?;
        w = w.sub(&h_inv.matmul(&g[0])?)?;
        w_new = w_new.sub(&h_new_inv.matmul(&g_new[0])?)?;
        let mapped = a.matmul(&w_new)?;
        param_gap = param_gap.max(gap_or_inf(rel_err(&w, &mapped)));
        let dl = q.loss(std::slice::from_ref(&w))? - q_new.loss(std::slice::from_ref(&w_new))?;
        loss_gap = loss_gap.max(gap_or_inf(dl.abs()));
    }
    Ok((param_gap, loss_gap))
}

/// Vector-case reference runs on a 2-dimensional least-squares problem with
/// `A = diag(e⁵, e⁻⁵)`: Newton (affine) and SANIA (scale) must track their
/// transformed twins, SGD and Adam with `ε = 0` must not. SGD with `A = I`
/// is the trivial floor.
pub fn vector_reference_suite() -> Result<VectorSuiteReport> {
    let (q, w0) = vector_fixture()?;
    let e = [5f64.exp(), (-5f64).exp()];
    let a_diag = Matrix::diag(&e)?;
    let a_col = Matrix::from_rows(&[[e[0]], [e[1]]])?;
    let steps = 20;
    let mut cases = Vec::new();

    let (pg, lg) = newton_case(&q, &a_diag, &w0, steps)?;
    cases.push(VectorCase {
        name: "newton",
        expect_invariant: true,
        max_param_gap: pg,
        max_loss_gap: lg,
        passed: false,
    });

    let classic = |gamma: f64| HyperParams {
        gamma,
        epsilon: 0.0,
        mode: StepMode::Classic,
        ..HyperParams::default()
    };
    let runs: [(&'static str, OptimizerKind, Reparam, HyperParams, bool); 4] = [
        ("sgd-identity", OptimizerKind::Sgd, Reparam::Identity, classic(1e-2), true),
        ("sania", OptimizerKind::AdamSania, Reparam::scale(a_col.clone())?, classic(1e-3), true),
        ("sgd", OptimizerKind::Sgd, Reparam::scale(a_col.clone())?, classic(1e-6), false),
        ("adam", OptimizerKind::Adam, Reparam::scale(a_col)?, classic(1e-2), false),
    ];
    for (name, kind, r, hp, expect) in runs {
        let pair = run_pair(kind, &q, vec![r], vec![w0.clone()], &hp, steps as u64, VECTOR_INVARIANT_TOL)?;
        cases.push(VectorCase {
            name,
            expect_invariant: expect,
            max_param_gap: pair.report.max_param_gap,
            max_loss_gap: pair.report.max_loss_gap,
            passed: false,
        });
    }
    for c in &mut cases {
        c.passed = if c.expect_invariant {
            c.max_param_gap <= VECTOR_INVARIANT_TOL
        } else {
            c.max_param_gap >= VECTOR_BREAK_MIN
        };
    }
    Ok(VectorSuiteReport { cases })
}
