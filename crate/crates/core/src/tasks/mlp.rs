//! Bias-free two-layer perceptron `softmax(relu(X·W1)·W2)` with softmax
//! cross-entropy and hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Targets;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objective::Objective;
use crate::par::Execution;

#[derive(Debug, Clone)]
pub struct MlpLoss {
    x: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    hidden: usize,
    /// Held-out set scored by [`Objective::metric`].
    eval: Option<(Matrix, Vec<usize>)>,
    pub exec: Execution,
}

fn class_labels(y: &Targets) -> Result<(Vec<usize>, usize)> {
    match y {
        Targets::Classes { labels, num_classes } => Ok((labels.clone(), *num_classes)),
        Targets::Real(_) => Err(Error::InvalidParameter(
            "the MLP needs class labels, not real targets".into(),
        )),
    }
}

impl MlpLoss {
    pub fn new(x: Matrix, y: &Targets, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
        }
        let (labels, num_classes) = class_labels(y)?;
        if labels.len() != x.rows() {
            return Err(Error::InvalidParameter(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        Ok(Self {
            x,
            labels,
            num_classes,
            hidden,
            eval: None,
            exec: Execution::default(),
        })
    }

    pub fn with_eval(mut self, x: Matrix, y: &Targets) -> Result<Self> {
        let (labels, _) = class_labels(y)?;
        if x.cols() != self.x.cols() || labels.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                op: "MlpLoss::with_eval",
                left: x.shape(),
                right: self.x.shape(),
            });
        }
        self.eval = Some((x, labels));
        Ok(self)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn forward(&self, x: &Matrix, w1: &Matrix, w2: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
        let z = x.matmul_with(w1, self.exec)?;
        let h = z.map("relu", |v| v.max(0.0))?;
        let s = h.matmul_with(w2, self.exec)?;
        Ok((z, h, s))
    }

    /// Mean cross-entropy and `∂loss/∂scores`.
    fn cross_entropy(&self, scores: &Matrix) -> Result<(f64, Matrix)> {
        let (n, c) = scores.shape();
        let mut total = 0.0;
        let mut grad = Vec::with_capacity(n * c);
        for i in 0..n {
            let row = scores.row(i);
            let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|s| (s - top).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let label = self.labels[i];
            total += sum.ln() - (row[label] - top);
            for (j, e) in exps.iter().enumerate() {
                let p = e / sum;
                grad.push((p - (j == label) as u8 as f64) / n as f64);
            }
        }
        Ok((total / n as f64, Matrix::new(n, c, grad)?))
    }
}

impl Objective for MlpLoss {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![
            (self.x.cols(), self.hidden),
            (self.hidden, self.num_classes),
        ]
    }

    fn loss(&self, params: &[Matrix]) -> Result<f64> {
        self.check_params(params)?;
        let (_, _, s) = self.forward(&self.x, &params[0], &params[1])?;
        Ok(self.cross_entropy(&s)?.0)
    }

    fn loss_and_grad(&self, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        self.check_params(params)?;
        let (w1, w2) = (&params[0], &params[1]);
        let (z, h, s) = self.forward(&self.x, w1, w2)?;
        let (loss, ds) = self.cross_entropy(&s)?;
        let dw2 = h.t_matmul(&ds)?;
        let dh = ds.matmul_t(w2)?;
        // The subgradient at a zero pre-activation is taken as 1, so a zero
        // first layer still receives signal.
        let dz = dh.zip_map("relu backward", &z, |d, zv| if zv >= 0.0 { d } else { 0.0 })?;
        let dw1 = self.x.t_matmul(&dz)?;
        Ok((loss, vec![dw1, dw2]))
    }

    fn metric(&self, params: &[Matrix]) -> Result<Option<f64>> {
        match &self.eval {
            Some((x, labels)) => {
                self.check_params(params)?;
                let (_, _, s) = self.forward(x, &params[0], &params[1])?;
                Ok(Some(fraction_correct(&s, labels)?))
            }
            None => Ok(None),
        }
    }
}

fn fraction_correct(scores: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let hits = (0..scores.rows())
        .filter(|&i| {
            let row = scores.row(i);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
            best == labels[i]
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Fraction of rows whose argmax prediction (ties to the lowest class)
/// matches the label.
pub fn accuracy(params: &[Matrix], x: &Matrix, y: &Targets) -> Result<f64> {
    let (labels, _) = class_labels(y)?;
    if labels.is_empty() || x.rows() == 0 {
        return Err(Error::EmptySplit("evaluation"));
    }
    let h = x.matmul(&params[0])?.map("relu", |v| v.max(0.0))?;
    fraction_correct(&h.matmul(&params[1])?, &labels)
}

/// First layer zeros, second layer `U(−1/√hidden, 1/√hidden)`.
pub fn init_mlp_params(features: usize, hidden: usize, classes: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (hidden as f64).sqrt();
    let w2 = Matrix::from_fn(hidden, classes, |_, _| rng.random_range(-bound..bound))
        .expect("finite uniform draws");
    vec![Matrix::zeros(features, hidden), w2]
}
