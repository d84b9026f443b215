//! Data and losses for the experiments.

mod libsvm;
mod mlp;
mod quadratic;
mod synthetic;

pub use libsvm::{parse_libsvm, serialize_libsvm};
pub use mlp::{accuracy, init_mlp_params, MlpLoss};
pub use quadratic::QuadraticLoss;
pub use synthetic::gaussian_blobs;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Self::Classes { labels, .. } => labels.len(),
            Self::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Self::Classes { labels, num_classes } => Self::Classes {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Self::Real(v) => Self::Real(rows.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Targets as an `N × c` matrix: one-hot for classes, a column for reals.
    pub fn to_matrix(&self) -> Result<Matrix> {
        match self {
            Self::Classes { labels, num_classes } => {
                Matrix::from_fn(labels.len(), *num_classes, |i, j| (labels[i] == j) as u8 as f64)
            }
            Self::Real(v) => Matrix::new(v.len(), 1, v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn all_train(n: usize) -> Self {
        Self {
            train: (0..n).collect(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Validation,
    Test,
}

impl Part {
    fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Targets,
    pub split: Split,
}

impl Dataset {
    pub fn new(x: Matrix, y: Targets) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::InvalidParameter(format!(
                "{} feature rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if let Targets::Classes { labels, num_classes } = &y {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *num_classes) {
                return Err(Error::InvalidParameter(format!(
                    "label {bad} out of range for {num_classes} classes"
                )));
            }
        }
        let split = Split::all_train(x.rows());
        Ok(Self { x, y, split })
    }

    pub fn num_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.y {
            Targets::Classes { num_classes, .. } => Some(num_classes),
            Targets::Real(_) => None,
        }
    }

    /// Seeded shuffle into train/validation/test by the given fractions
    /// (the test part takes the remainder).
    pub fn with_split(mut self, train: f64, validation: f64, seed: u64) -> Result<Self> {
        if !(train > 0.0 && validation >= 0.0 && train + validation <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split fractions {train}/{validation} are invalid"
            )));
        }
        let n = self.num_samples();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64) * train).round() as usize;
        let n_val = (((n as f64) * validation).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_val);
        let validation = idx.split_off(n_train);
        self.split = Split {
            train: idx,
            validation,
            test,
        };
        Ok(self)
    }

    pub fn part_indices(&self, part: Part) -> &[usize] {
        match part {
            Part::Train => &self.split.train,
            Part::Validation => &self.split.validation,
            Part::Test => &self.split.test,
        }
    }

    /// Features and targets of one split.
    pub fn part(&self, part: Part) -> Result<(Matrix, Targets)> {
        let rows = self.part_indices(part);
        if rows.is_empty() {
            return Err(Error::EmptySplit(part.name()));
        }
        let cols = self.num_features();
        let x = Matrix::from_fn(rows.len(), cols, |i, j| self.x.get(rows[i], j))?;
        Ok((x, self.y.select(rows)))
    }

    /// Keeps only `rows` (in that order); the split becomes all-train.
    pub fn subsample(&self, rows: &[usize]) -> Result<Dataset> {
        let x = Matrix::from_fn(rows.len(), self.num_features(), |i, j| self.x.get(rows[i], j))?;
        Dataset::new(x, self.y.select(rows))
    }
}

/// Draws `e_i = exp(a_i)`, `a_i ~ U[−k, k]`, one per feature.
pub fn feature_scales(num_features: usize, k: f64, seed: u64) -> Result<Vec<f64>> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale bound k = {k}")));
    }
    if k == 0.0 {
        return Ok(vec![1.0; num_features]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..num_features)
        .map(|_| rng.random_range(-k..=k).exp())
        .collect())
}

/// `X̃ = X·diag(e)` with [`feature_scales`]; returns the scales too.
pub fn scale_features(d: &Dataset, k: f64, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    let e = feature_scales(d.num_features(), k, seed)?;
    let x = Matrix::from_fn(d.num_samples(), d.num_features(), |i, j| d.x.get(i, j) * e[j])?;
    Ok((
        Dataset {
            x,
            y: d.y.clone(),
            split: d.split.clone(),
        },
        e,
    ))
}
