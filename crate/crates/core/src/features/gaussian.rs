use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ArrayRef, BlobReader, BlobWriter, FeatureError, FeaturesByClass, Result};

/// Smallest ridge added to the covariance, used when the pooled scatter is
/// exactly zero.
pub const LAMBDA_FLOOR: f64 = 1e-9;

/// Class means with one pooled (tied) covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianClassModel {
    pub dim: usize,
    /// `C × F`, row-major.
    pub means: Vec<f64>,
    /// Pooled within-class covariance, before regularization.
    pub covariance: DMatrix<f64>,
    pub lambda: f64,
    /// `(Σ + λI)⁻¹`.
    pub precision: DMatrix<f64>,
}

impl GaussianClassModel {
    /// `Σ = Σ_c Σ_i (x_i − μ_c)(x_i − μ_c)ᵀ / (N − C)`, `λ = 10⁻³·tr(Σ)/F`.
    pub fn fit(features: &FeaturesByClass) -> Result<Self> {
        features.require(2)?;
        let f = features.dim;
        let c = features.n_classes();
        let mut means = vec![0.0; c * f];
        let mut scatter = DMatrix::<f64>::zeros(f, f);
        for class in 0..c {
            let n = features.count(class) as f64;
            let mu = &mut means[class * f..(class + 1) * f];
            for row in features.rows(class) {
                mu.iter_mut().zip(row).for_each(|(m, v)| *m += v);
            }
            mu.iter_mut().for_each(|m| *m /= n);
            let mut diff = vec![0.0; f];
            for row in features.rows(class) {
                diff.iter_mut().zip(row.iter().zip(mu.iter())).for_each(|(d, (v, m))| *d = v - m);
                for a in 0..f {
                    for b in a..f {
                        scatter[(a, b)] += diff[a] * diff[b];
                    }
                }
            }
        }
        for a in 0..f {
            for b in 0..a {
                scatter[(a, b)] = scatter[(b, a)];
            }
        }
        let covariance = scatter / (features.total() - c) as f64;
        let lambda = (1e-3 * covariance.trace() / f as f64).max(LAMBDA_FLOOR);
        Self::with_covariance(f, means, covariance, lambda)
    }

    /// Builds the model from explicit parameters, inverting `Σ + λI`.
    pub fn with_covariance(dim: usize, means: Vec<f64>, covariance: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let mut reg = covariance.clone();
        for i in 0..dim {
            reg[(i, i)] += lambda;
        }
        let chol = reg
            .cholesky()
            .ok_or_else(|| FeatureError::InvalidParam("regularized covariance is not positive definite".into()))?;
        Ok(Self {
            dim,
            means,
            covariance,
            lambda,
            precision: chol.inverse(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.means.len() / self.dim
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.dim..(class + 1) * self.dim]
    }

    /// Squared Mahalanobis distance to every class mean.
    pub fn mahalanobis_distance(&self, x: &[f64]) -> Vec<f64> {
        let f = self.dim;
        let mut diff = vec![0.0; f];
        (0..self.n_classes())
            .map(|c| {
                diff.iter_mut()
                    .zip(x.iter().zip(self.mean(c)))
                    .for_each(|(d, (v, m))| *d = v - m);
                let mut total = 0.0;
                for a in 0..f {
                    let row: f64 = (0..f).map(|b| self.precision[(a, b)] * diff[b]).sum();
                    total += diff[a] * row;
                }
                total.max(0.0)
            })
            .collect()
    }

    pub fn save(&self, blob: &mut BlobWriter) -> serde_json::Value {
        let stored = Stored {
            dim: self.dim,
            lambda: self.lambda,
            means: blob.push(&self.means),
            covariance: blob.push(self.covariance.as_slice()),
        };
        serde_json::to_value(stored).expect("plain struct")
    }

    pub fn load(value: &serde_json::Value, blob: &BlobReader) -> Result<Self> {
        let s: Stored = serde_json::from_value(value.clone()).map_err(|e| FeatureError::Format(e.to_string()))?;
        let cov = blob.get(&s.covariance)?;
        if cov.len() != s.dim * s.dim {
            return Err(FeatureError::Format("covariance size".into()));
        }
        Self::with_covariance(
            s.dim,
            blob.get(&s.means)?.to_vec(),
            DMatrix::from_column_slice(s.dim, s.dim, cov),
            s.lambda,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Stored {
    dim: usize,
    lambda: f64,
    means: ArrayRef,
    covariance: ArrayRef,
}
