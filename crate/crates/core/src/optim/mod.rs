//! The optimizer catalogue.
//!
//! Every method is a pair (preconditioner, base norm): statistics of the
//! gradients build a [`Preconditioner`], and the step is the LMO of the
//! preconditioned norm applied to the gradient or its momentum. Each kind
//! also has a hand-written [`step`] so the two formulations can be checked
//! against each other.

mod engine;
mod muadam;
mod step;

use std::fmt;
use std::str::FromStr;

pub use engine::{engine_step, materialize_preconditioner, update_preconditioner};
pub use muadam::muadam_step;
pub use step::{soap_step, splus_step, step};

use crate::decomp::{default_floor, spd_power_from_eig, sym_eig};
use crate::error::{Error, Result};
use crate::geometry::{BaseNorm, LmoConfig, SpectralBackend};
use crate::matrix::Matrix;
use crate::polar::PolarSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    NormalizedSgd,
    SignSgd,
    Muon,
    AdaGrad,
    Adam,
    AdamW,
    Madgrad,
    AdamSania,
    Shampoo,
    OneSidedShampoo,
    Soap,
    Splus,
    MuAdam,
    MuAdamSania,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 15] = [
        Self::Sgd,
        Self::NormalizedSgd,
        Self::SignSgd,
        Self::Muon,
        Self::AdaGrad,
        Self::Adam,
        Self::AdamW,
        Self::Madgrad,
        Self::AdamSania,
        Self::Shampoo,
        Self::OneSidedShampoo,
        Self::Soap,
        Self::Splus,
        Self::MuAdam,
        Self::MuAdamSania,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::NormalizedSgd => "normalized-sgd",
            Self::SignSgd => "sign-sgd",
            Self::Muon => "muon",
            Self::AdaGrad => "adagrad",
            Self::Adam => "adam",
            Self::AdamW => "adamw",
            Self::Madgrad => "madgrad",
            Self::AdamSania => "adam-sania",
            Self::Shampoo => "shampoo",
            Self::OneSidedShampoo => "one-sided-shampoo",
            Self::Soap => "soap",
            Self::Splus => "splus",
            Self::MuAdam => "muadam",
            Self::MuAdamSania => "muadam-sania",
        }
    }

    /// Base norm of the LMO. `Sgd` has none and reports Frobenius.
    pub fn base_norm(self) -> BaseNorm {
        match self {
            Self::SignSgd | Self::Splus => BaseNorm::MaxAbs,
            Self::Muon | Self::MuAdam | Self::MuAdamSania => BaseNorm::Spectral,
            _ => BaseNorm::Frobenius,
        }
    }

    /// Exponent `q` in `D = V^q + ε` for the entrywise methods.
    pub fn diag_exponent(self) -> Option<f64> {
        match self {
            Self::AdaGrad | Self::Adam | Self::AdamW | Self::Soap => Some(0.25),
            Self::Madgrad => Some(1.0 / 6.0),
            Self::AdamSania => Some(0.5),
            Self::MuAdam => Some(0.25),
            Self::MuAdamSania => Some(0.5),
            _ => None,
        }
    }

    /// Whether the LMO acts on the bias-corrected first moment.
    pub fn uses_momentum(self, hp: &HyperParams) -> bool {
        match self {
            Self::Muon => hp.muon_momentum,
            Self::Adam
            | Self::AdamW
            | Self::Madgrad
            | Self::AdamSania
            | Self::Soap
            | Self::Splus
            | Self::MuAdam
            | Self::MuAdamSania => true,
            _ => false,
        }
    }

    pub fn uses_second_moment(self) -> bool {
        self.diag_exponent().is_some()
    }

    pub fn uses_eigenbasis(self) -> bool {
        matches!(self, Self::Soap | Self::Splus)
    }

    /// Weight decay is decoupled for every kind except plain Adam.
    pub fn applies_weight_decay(self) -> bool {
        self != Self::Adam
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Every step is the exact LMO of the method's preconditioned norm.
    LmoNormalized,
    /// The historical, unnormalized update where one exists.
    Classic,
}

impl FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lmo" | "lmo-normalized" => Ok(Self::LmoNormalized),
            "classic" => Ok(Self::Classic),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Linear ramp from 0 over `warmup` steps, then linear decay to 0 at `total`.
    WarmupLinear { warmup: u64, total: u64 },
    /// Half-cosine decay from 1 to 0 over `total` steps.
    Cosine { total: u64 },
}

impl LrSchedule {
    pub fn factor(&self, t: u64) -> f64 {
        match *self {
            Self::Constant => 1.0,
            Self::WarmupLinear { warmup, total } => {
                if t < warmup {
                    (t + 1) as f64 / warmup as f64
                } else if t >= total {
                    0.0
                } else {
                    (total - t) as f64 / (total - warmup).max(1) as f64
                }
            }
            Self::Cosine { total } => {
                if t >= total {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub gamma: f64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Exponent of the MuAdam diagonal preconditioner `V̂^p`. The MuAdam kinds fix it
    /// (1/4 and 1/2); [`muadam_step`] reads it directly.
    pub p: f64,
    pub rho: f64,
    pub weight_decay: f64,
    pub mode: StepMode,
    pub spectral_backend: SpectralBackend,
    pub rms_scaling: bool,
    /// Muon applies its LMO to the momentum buffer unless this is off.
    pub muon_momentum: bool,
    /// EMA factor for the SOAP/SPlus Kronecker statistics; `None` means `beta2`.
    pub precond_beta: Option<f64>,
    pub refresh_every: u64,
    /// Eigenvalue floor for matrix roots; `None` means the relative default.
    pub eig_floor: Option<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            schedule: LrSchedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            p: 0.5,
            rho: 1.0,
            weight_decay: 0.0,
            mode: StepMode::LmoNormalized,
            spectral_backend: SpectralBackend::NewtonSchulz(PolarSchedule::default()),
            rms_scaling: false,
            muon_momentum: true,
            precond_beta: None,
            refresh_every: 10,
            eig_floor: None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", self.gamma);
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(name, b);
            }
        }
        if let Some(b) = self.precond_beta {
            if !(b > 0.0 && b < 1.0) {
                return bad("precond_beta", b);
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", self.epsilon);
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", self.weight_decay);
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return bad("p", self.p);
        }
        if self.refresh_every == 0 {
            return Err(Error::InvalidParameter("refresh_every must be >= 1".into()));
        }
        if let Some(f) = self.eig_floor {
            if !(f >= 0.0 && f.is_finite()) {
                return bad("eig_floor", f);
            }
        }
        self.lmo_config().validate()
    }

    pub fn lmo_config(&self) -> LmoConfig {
        LmoConfig {
            rho: self.rho,
            spectral_backend: self.spectral_backend.clone(),
            rms_scaling: self.rms_scaling,
        }
    }

    /// Step size at step `t` (counted from 0).
    pub fn gamma_at(&self, t: u64) -> f64 {
        self.gamma * self.schedule.factor(t)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step_count: u64,
    /// First moment `M_t`.
    pub m: Option<Matrix>,
    /// Second moment `V_t` (rotated space for SOAP).
    pub v: Option<Matrix>,
    /// Left Kronecker statistic (sum or EMA of `G·Gᵀ`).
    pub hl: Option<Matrix>,
    /// Right Kronecker statistic (sum or EMA of `Gᵀ·G`).
    pub hr: Option<Matrix>,
    pub ql: Option<Matrix>,
    pub qr: Option<Matrix>,
    /// Eigenbasis refreshes performed so far.
    pub refresh_counter: u64,
    /// Parameter shape, recorded on the first step.
    pub shape: Option<(usize, usize)>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_shapes(&self, w: &Matrix, g: &Matrix) -> Result<()> {
        let (m, n) = w.shape();
        if let Some(shape) = self.shape {
            if shape != (m, n) {
                return Err(Error::DimensionMismatch {
                    op: "optimizer state",
                    left: shape,
                    right: (m, n),
                });
            }
        }
        if g.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                op: "optimizer step",
                left: w.shape(),
                right: g.shape(),
            });
        }
        let expect = [
            (&self.m, (m, n)),
            (&self.v, (m, n)),
            (&self.hl, (m, m)),
            (&self.hr, (n, n)),
            (&self.ql, (m, m)),
            (&self.qr, (n, n)),
        ];
        for (buf, shape) in expect {
            if let Some(b) = buf {
                if b.shape() != shape {
                    return Err(Error::DimensionMismatch {
                        op: "optimizer state",
                        left: b.shape(),
                        right: shape,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Owns the state of one parameter block.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hp: HyperParams) -> Result<Self> {
        hp.validate()?;
        Ok(Self {
            kind,
            hp,
            state: OptimizerState::new(),
        })
    }

    pub fn step(&mut self, w: &Matrix, g: &Matrix) -> Result<Matrix> {
        let (w_next, state) = step(self.kind, &self.state, w, g, &self.hp)?;
        self.state = state;
        Ok(w_next)
    }
}

// Shared recursions used by both formulations.

pub(crate) fn ema(prev: Option<&Matrix>, beta: f64, x: &Matrix) -> Result<Matrix> {
    match prev {
        Some(p) => p.lin_comb(beta, x, 1.0 - beta),
        None => x.scale(1.0 - beta),
    }
}

pub(crate) fn accumulate(prev: Option<&Matrix>, x: &Matrix) -> Result<Matrix> {
    match prev {
        Some(p) => p.add(x),
        None => Ok(x.clone()),
    }
}

pub(crate) fn bias_correct(x: &Matrix, beta: f64, t: u64) -> Result<Matrix> {
    x.scale(1.0 / (1.0 - beta.powi(t as i32 + 1)))
}

pub(crate) fn squared(g: &Matrix) -> Result<Matrix> {
    g.hadamard(g)
}

/// `V^q + ε` entrywise, refusing the `ε = 0`, `V = 0` corner.
pub(crate) fn diag_precond(v: &Matrix, q: f64, eps: f64) -> Result<Matrix> {
    if eps == 0.0 {
        for i in 0..v.rows() {
            for j in 0..v.cols() {
                if v.get(i, j) <= 0.0 {
                    return Err(Error::NonPositive {
                        op: "second moment with epsilon = 0",
                        row: i,
                        col: j,
                        value: v.get(i, j),
                    });
                }
            }
        }
    }
    v.map("diag_precond", |x| x.max(0.0).powf(q) + eps)
}

/// `S^p` for a PSD statistic, floored per the hyperparameters.
pub(crate) fn matrix_root(s: &Matrix, p: f64, hp: &HyperParams) -> Result<Matrix> {
    let eig = sym_eig(s)?;
    let floor = hp
        .eig_floor
        .unwrap_or_else(|| default_floor(eig.lambda.first().copied().unwrap_or(0.0)));
    spd_power_from_eig(&eig, p, floor)
}

pub(crate) fn decay(kind: OptimizerKind, w: &Matrix, gamma: f64, hp: &HyperParams) -> Result<Matrix> {
    if kind.applies_weight_decay() && hp.weight_decay > 0.0 {
        w.scale(1.0 - gamma * hp.weight_decay)
    } else {
        Ok(w.clone())
    }
}
