use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix must have positive dimensions and rows*cols entries (got {rows}x{cols} with {len} entries)")]
    InvalidShape { rows: usize, cols: usize, len: usize },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("{op}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("{op}: matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { op: &'static str, asymmetry: f64 },
    #[error("{op}: entry {value:e} at ({row}, {col}) must be strictly positive")]
    NonPositive {
        op: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{op}: matrix is singular or too ill-conditioned")]
    Singular { op: &'static str },
    #[error("{op}: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("spd_power: eigenvalue {value:e} is negative")]
    NegativeEigenvalue { value: f64 },
    #[error("spd_power: negative power {power} requires a positive eigenvalue floor")]
    InvalidPower { power: f64 },
    #[error("polar iteration diverged at iteration {iteration} (residuals {residuals:?})")]
    PolarDiverged {
        iteration: usize,
        residuals: Vec<f64>,
    },
    #[error("{op}: input matrix is zero")]
    ZeroInput { op: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("optimizer state is missing the `{0}` buffer")]
    MissingState(&'static str),
    #[error("tag mismatch: {0}")]
    TagMismatch(String),
    #[error("libsvm parse error at line {line}, field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),
}
