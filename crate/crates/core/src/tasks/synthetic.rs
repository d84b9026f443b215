use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Two balanced Gaussian classes with unit covariance whose means sit at
/// `±separation/2` along a random unit direction.
pub fn gaussian_blobs(samples: usize, features: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if samples < 2 || features == 0 {
        return Err(Error::InvalidParameter(format!(
            "blobs need >= 2 samples and >= 1 feature (got {samples}, {features})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);

    let labels: Vec<usize> = (0..samples).map(|i| i % 2).collect();
    let mut data = Vec::with_capacity(samples * features);
    for &label in &labels {
        let sign = if label == 1 { 0.5 } else { -0.5 };
        for d in &dir {
            let noise: f64 = rng.sample(StandardNormal);
            data.push(sign * separation * d + noise);
        }
    }
    Dataset::new(
        Matrix::new(samples, features, data)?,
        Targets::Classes {
            labels,
            num_classes: 2,
        },
    )
}
