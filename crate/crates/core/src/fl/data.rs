//! Synthetic federated datasets with a planted linear model.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LocalDataset, Sample, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Feature dimension (equal to the model dimension).
    pub dim: usize,
    pub samples_per_device: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    /// Standard deviation of the additive noise on the planted score.
    pub noise_std: f64,
    /// Probability of flipping a class label (logistic task only).
    pub label_flip: f64,
    /// Norm of the planted weight vector.
    pub planted_norm: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            samples_per_device: 100,
            validation_samples: 500,
            test_samples: 1000,
            noise_std: 0.5,
            label_flip: 0.05,
            planted_norm: 3.0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("data.dim must be >= 1".into()));
        }
        if self.samples_per_device == 0 || self.validation_samples == 0 || self.test_samples == 0 {
            return Err(Error::Config(
                "data sample counts (per device, validation, test) must be >= 1".into(),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("data.noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(0.0..=0.5).contains(&self.label_flip) {
            return Err(Error::Config(format!(
                "data.label_flip must lie in [0, 0.5], got {}",
                self.label_flip
            )));
        }
        if !(self.planted_norm.is_finite() && self.planted_norm > 0.0) {
            return Err(Error::Config(format!(
                "data.planted_norm must be > 0, got {}",
                self.planted_norm
            )));
        }
        Ok(())
    }

    /// Bits needed to store one device's local data as 32-bit words
    /// (features plus target).
    pub fn device_data_bits(&self) -> f64 {
        (self.samples_per_device * (self.dim + 1) * 32) as f64
    }
}

/// Training partitions plus the held-out validation and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub devices: Vec<LocalDataset>,
    pub validation: LocalDataset,
    pub test: LocalDataset,
    pub planted: Vec<f64>,
}

/// Draws one pool of `M * n + n_val + n_test` i.i.d. samples and splits it
/// into per-device training sets, a validation set and a test set.
pub fn generate<R: Rng + ?Sized>(
    cfg: &DataConfig,
    task: Task,
    device_count: usize,
    rng: &mut R,
) -> Result<FederatedData> {
    cfg.validate()?;
    if device_count == 0 {
        return Err(Error::Config("device_count must be >= 1".into()));
    }
    let raw: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let planted: Vec<f64> = raw.iter().map(|v| v * cfg.planted_norm / norm).collect();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut draw = |count: usize| -> Result<LocalDataset> {
        let samples = (0..count)
            .map(|_| {
                let features: Vec<f64> =
                    (0..cfg.dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
                let score: f64 = features.iter().zip(&planted).map(|(q, w)| q * w).sum::<f64>()
                    + noise.sample(&mut *rng);
                let target = match task {
                    Task::LinearRegressionSqLoss => score,
                    Task::LogisticTwoClass => {
                        let label = score > 0.0;
                        let flipped = rng.random_bool(cfg.label_flip);
                        f64::from(u8::from(label != flipped))
                    }
                };
                Sample { features, target }
            })
            .collect();
        LocalDataset::new(samples)
    };

    let devices = (0..device_count)
        .map(|_| draw(cfg.samples_per_device))
        .collect::<Result<Vec<_>>>()?;
    let validation = draw(cfg.validation_samples)?;
    let test = draw(cfg.test_samples)?;
    Ok(FederatedData {
        devices,
        validation,
        test,
        planted,
    })
}
