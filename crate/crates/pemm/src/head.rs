//! The distance-based classifier head: feature normalization, Gaussian
//! kernels of distances to class centers, and mixture posteriors.

use serde::{Deserialize, Serialize};

use crate::energy::CenterMatrix;
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Classifier head settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Radius hyperparameter of the Euclidean ball in the kernel; enters as
    /// sigma^2. Not learnable.
    pub sigma: f64,
    /// Whether features are scaled to unit L2 norm before the kernel.
    pub normalize_features: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig { sigma: 1.0, normalize_features: true }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::domain("HeadConfig", format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Per-sample class probabilities; rows sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    probs: Tensor,
}

impl Posterior {
    pub fn new(probs: Tensor) -> Result<Self> {
        let (rows, _) = probs.dims2()?;
        for n in 0..rows {
            let row = probs.row(n);
            if row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::domain("Posterior::new", format!("row {} has entries outside [0, 1]", n)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::domain("Posterior::new", format!("row {} sums to {}, not 1", n, s)));
            }
        }
        Ok(Posterior { probs })
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn batch_size(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.probs.shape()[1]
    }

    /// Strict invariant check: entries in (0, 1], rows sum to 1 within 1e-12.
    pub fn validate_strict(&self) -> Result<()> {
        let (rows, _) = self.probs.dims2()?;
        for n in 0..rows {
            let row = self.probs.row(n);
            if row.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                return Err(Error::domain("Posterior", format!("row {} has entries outside (0, 1]", n)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::domain("Posterior", format!("row {} sums to {:.17}, off by > 1e-12", n, s)));
            }
        }
        Ok(())
    }

    /// Argmax per row, ties broken by the lowest class index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        let (rows, cols) = self.probs.dims2().expect("posterior is 2-D");
        (0..rows)
            .map(|n| {
                let row = self.probs.row(n);
                let mut best = 0;
                for j in 1..cols {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Scales each row of a B×m feature matrix to unit L2 norm. Zero rows map to
/// zero (epsilon guard) and are reported via a log warning.
pub fn normalize_features(z: &Tensor) -> Result<Tensor> {
    let (rows, _) = z.dims2()?;
    z.check_finite("normalize_features")?;
    for n in 0..rows {
        if z.row(n).iter().all(|&x| x == 0.0) {
            log::warn!("normalize_features: row {} is all zeros and stays zero", n);
        }
    }
    tensor::row_l2_normalize(z)
}

/// Gaussian kernel of squared distances: `d[n,k] = exp(-||z_n - c_k||^2 / sigma^2)`.
/// All entries lie in (0, 1] up to floating-point underflow at extreme
/// distances.
pub fn kernel_distances(z: &Tensor, centers: &CenterMatrix, cfg: &HeadConfig) -> Result<Tensor> {
    cfg.validate()?;
    let sq = tensor::pairwise_sqdist(z, centers.tensor()).map_err(|e| match e {
        Error::ShapeMismatch { detail, .. } => Error::shape("kernel_distances", detail),
        other => other,
    })?;
    Ok(tensor::exp(&tensor::scale(&sq, -1.0 / (cfg.sigma * cfg.sigma))))
}

/// Normalizes kernel rows into per-sample class posteriors.
pub fn posterior(kernels: &Tensor) -> Result<Posterior> {
    let probs = tensor::row_normalize(kernels)?;
    Posterior::new(probs)
}

/// Predicted class per sample: argmax of the posterior, ties to the lowest
/// class index.
pub fn predict(z: &Tensor, centers: &CenterMatrix, cfg: &HeadConfig) -> Result<Vec<usize>> {
    let kernels = kernel_distances(z, centers, cfg)?;
    Ok(posterior(&kernels)?.argmax_rows())
}
