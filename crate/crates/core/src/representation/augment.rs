//! Vector-space augmentations: random coordinate dropout, a random global
//! rescale, and additive Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    pub noise_sigma: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub dropout_fraction: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self { noise_sigma: 0.1, scale_min: 0.8, scale_max: 1.2, dropout_fraction: 0.1 }
    }
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self { noise_sigma: 0.0, scale_min: 1.0, scale_max: 1.0, dropout_fraction: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::invalid("scale range must be positive and ordered"));
        }
        if !(0.0..1.0).contains(&self.dropout_fraction) {
            return Err(Error::invalid("dropout_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Samples one transform for a `dim`-dimensional input.
    pub fn sample(&self, dim: usize, rng: &mut impl Rng) -> AugmentDraw {
        let keep = (0..dim).map(|_| rng.random::<f64>() >= self.dropout_fraction).collect();
        let scale = if self.scale_max > self.scale_min {
            rng.random_range(self.scale_min..=self.scale_max)
        } else {
            self.scale_min
        };
        let noise = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.noise_sigma * z
            })
            .collect();
        AugmentDraw { keep, scale, noise }
    }
}

/// One sampled transform.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentDraw {
    pub keep: Vec<bool>,
    pub scale: f64,
    pub noise: Vec<f64>,
}

/// `(input ⊙ keep) · scale + noise`.
pub fn augment(input: &[f64], draw: &AugmentDraw) -> Vec<f64> {
    input
        .iter()
        .zip(&draw.keep)
        .zip(&draw.noise)
        .map(|((x, &k), n)| if k { x * draw.scale + n } else { *n })
        .collect()
}
