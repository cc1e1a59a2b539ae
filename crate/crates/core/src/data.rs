//! Desk-scale data distributions: Gaussian mixtures arranged on a ring or a
//! grid, the standard mode-collapse testbeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataDistribution {
    /// `modes` Gaussians equally spaced on a circle of the given radius.
    GaussianRing { modes: usize, radius: f64, std: f64 },
    /// size × size Gaussians on a centred square lattice.
    GaussianGrid { size: usize, spacing: f64, std: f64 },
    /// Explicit mode centres (equal weights).
    CustomTable { centers: Vec<Vec<f64>>, std: f64 },
}

impl DataDistribution {
    pub fn validate(&self) -> Result<()> {
        let (n_modes, std) = match self {
            DataDistribution::GaussianRing { modes, std, .. } => (*modes, *std),
            DataDistribution::GaussianGrid { size, std, .. } => (size * size, *std),
            DataDistribution::CustomTable { centers, std } => (centers.len(), *std),
        };
        if n_modes == 0 {
            return Err(Error::InvalidConfig(
                "distribution needs at least one mode".into(),
            ));
        }
        if !(std > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mode standard deviation must be positive, got {std}"
            )));
        }
        if let DataDistribution::CustomTable { centers, .. } = self {
            let dim = centers[0].len();
            if dim == 0 || centers.iter().any(|c| c.len() != dim) {
                return Err(Error::InvalidConfig(
                    "custom mode centres must all share one non-zero dimension".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            DataDistribution::GaussianRing { .. } | DataDistribution::GaussianGrid { .. } => 2,
            DataDistribution::CustomTable { centers, .. } => centers[0].len(),
        }
    }

    pub fn std(&self) -> f64 {
        match self {
            DataDistribution::GaussianRing { std, .. }
            | DataDistribution::GaussianGrid { std, .. }
            | DataDistribution::CustomTable { std, .. } => *std,
        }
    }

    pub fn mode_centers(&self) -> Vec<Vec<f64>> {
        match self {
            DataDistribution::GaussianRing { modes, radius, .. } => (0..*modes)
                .map(|i| {
                    let angle = std::f64::consts::TAU * i as f64 / *modes as f64;
                    vec![radius * angle.cos(), radius * angle.sin()]
                })
                .collect(),
            DataDistribution::GaussianGrid { size, spacing, .. } => {
                let offset = (*size as f64 - 1.0) / 2.0;
                let mut centers = Vec::with_capacity(size * size);
                for i in 0..*size {
                    for j in 0..*size {
                        centers.push(vec![
                            (i as f64 - offset) * spacing,
                            (j as f64 - offset) * spacing,
                        ]);
                    }
                }
                centers
            }
            DataDistribution::CustomTable { centers, .. } => centers.clone(),
        }
    }

    /// Draw one sample: pick a mode uniformly, add isotropic noise.
    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        let centers = self.mode_centers();
        let std = self.std();
        let k = (rng.next_u64() % centers.len() as u64) as usize;
        let data = centers[k].iter().map(|&c| c + std * rng.normal()).collect();
        Tensor::new(vec![self.dim()], data).expect("finite sample")
    }

    /// Exact first and second moments of the mixture:
    /// μ = mean of centres, Σ = σ²I + cov(centres).
    pub fn analytic_moments(&self) -> (Vec<f64>, Matrix) {
        let centers = self.mode_centers();
        let dim = self.dim();
        let n = centers.len() as f64;
        let mut mean = vec![0.0; dim];
        for c in &centers {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v / n;
            }
        }
        let mut cov = Matrix::zeros(dim, dim);
        for c in &centers {
            for i in 0..dim {
                for j in 0..dim {
                    let v = cov.get(i, j) + (c[i] - mean[i]) * (c[j] - mean[j]) / n;
                    cov.set(i, j, v);
                }
            }
        }
        let sigma_sq = self.std() * self.std();
        for i in 0..dim {
            cov.set(i, i, cov.get(i, i) + sigma_sq);
        }
        (mean, cov)
    }
}
