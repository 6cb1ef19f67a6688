use serde::{Deserialize, Serialize};

use super::{sq_dist, ArrayRef, BlobReader, BlobWriter, FeatureError, FeaturesByClass, Result};

pub const OCSVM_TOL: f64 = 1e-3;
pub const OCSVM_MAX_ITER: usize = 100_000;

/// ν-one-class SVM with an RBF kernel, fitted on one class.
#[derive(Clone, Debug, PartialEq)]
pub struct OneClassSvm {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    /// Coefficients of the support vectors (`α > 0`).
    pub alpha: Vec<f64>,
    /// Support vectors, row-major.
    pub support: Vec<f64>,
    pub dim: usize,
    pub iterations: usize,
    pub residual: f64,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

impl OneClassSvm {
    /// Solves `min ½αᵀKα` subject to `0 ≤ αᵢ ≤ 1/(νn)`, `Σα = 1` by
    /// maximal-violating-pair updates.
    pub fn fit(rows: &[&[f64]], nu: f64, gamma: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(FeatureError::InvalidParam(format!("nu {nu} outside (0, 1]")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(FeatureError::InvalidParam(format!("gamma {gamma} must be positive")));
        }
        let n = rows.len();
        if n == 0 {
            return Err(FeatureError::InsufficientSamples {
                class: 0,
                count: 0,
                needed: 1,
            });
        }
        let dim = rows[0].len();
        let c = 1.0 / (nu * n as f64);
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rbf(gamma, rows[i], rows[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut alpha = vec![0.0; n];
        let mut remaining = 1.0;
        for a in alpha.iter_mut() {
            let take = c.min(remaining);
            *a = take;
            remaining -= take;
            if remaining <= 0.0 {
                break;
            }
        }
        let mut grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i * n + j] * alpha[j]).sum())
            .collect();

        let mut iterations = 0;
        let residual = loop {
            let (mut up, mut down) = (None::<usize>, None::<usize>);
            for i in 0..n {
                if alpha[i] < c && up.is_none_or(|u| grad[i] < grad[u]) {
                    up = Some(i);
                }
                if alpha[i] > 0.0 && down.is_none_or(|d| grad[i] > grad[d]) {
                    down = Some(i);
                }
            }
            let (Some(i), Some(j)) = (up, down) else { break 0.0 };
            let gap = grad[j] - grad[i];
            if gap <= OCSVM_TOL {
                break gap.max(0.0);
            }
            if iterations >= OCSVM_MAX_ITER {
                return Err(FeatureError::NoConvergence { iterations, residual: gap });
            }
            iterations += 1;
            let eta = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(1e-12);
            let delta = (gap / eta).min(c - alpha[i]).min(alpha[j]);
            alpha[i] += delta;
            alpha[j] -= delta;
            for t in 0..n {
                grad[t] += delta * (k[t * n + i] - k[t * n + j]);
            }
        };

        let bound = c * (1.0 - 1e-12);
        let free: Vec<f64> = (0..n)
            .filter(|&i| alpha[i] > 0.0 && alpha[i] < bound)
            .map(|i| grad[i])
            .collect();
        let rho = if free.is_empty() {
            let lower = (0..n)
                .filter(|&i| alpha[i] >= bound)
                .map(|i| grad[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let upper = (0..n)
                .filter(|&i| alpha[i] == 0.0)
                .map(|i| grad[i])
                .fold(f64::INFINITY, f64::min);
            match (lower.is_finite(), upper.is_finite()) {
                (true, true) => 0.5 * (lower + upper),
                (true, false) => lower,
                (false, true) => upper,
                (false, false) => 0.0,
            }
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };

        let mut support = Vec::new();
        let mut coef = Vec::new();
        for i in 0..n {
            if alpha[i] > 0.0 {
                coef.push(alpha[i]);
                support.extend_from_slice(rows[i]);
            }
        }
        Ok(Self {
            gamma,
            nu,
            rho,
            alpha: coef,
            support,
            dim,
            iterations,
            residual,
        })
    }

    /// `Σ αᵢ K(x, xᵢ) − ρ`; positive inside the estimated support.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .alpha
            .iter()
            .zip(self.support.chunks(self.dim))
            .map(|(a, sv)| a * rbf(self.gamma, x, sv))
            .sum();
        s - self.rho
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcsvmClassModel {
    pub nu: f64,
    pub gamma: f64,
    pub classes: Vec<OneClassSvm>,
}

impl OcsvmClassModel {
    pub fn fit(features: &FeaturesByClass, nu: f64, gamma: f64) -> Result<Self> {
        features.require(1)?;
        let classes = (0..features.n_classes())
            .map(|c| {
                let rows: Vec<&[f64]> = features.rows(c).collect();
                OneClassSvm::fit(&rows, nu, gamma)
            })
            .collect::<Result<_>>()?;
        Ok(Self { nu, gamma, classes })
    }

    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        self.classes.iter().map(|m| m.decision(x)).collect()
    }

    pub fn save(&self, blob: &mut BlobWriter) -> serde_json::Value {
        let classes = self
            .classes
            .iter()
            .map(|m| StoredSvm {
                rho: m.rho,
                dim: m.dim,
                iterations: m.iterations,
                residual: m.residual,
                alpha: blob.push(&m.alpha),
                support: blob.push(&m.support),
            })
            .collect();
        serde_json::to_value(Stored {
            nu: self.nu,
            gamma: self.gamma,
            classes,
        })
        .expect("plain struct")
    }

    pub fn load(value: &serde_json::Value, blob: &BlobReader) -> Result<Self> {
        let s: Stored = serde_json::from_value(value.clone()).map_err(|e| FeatureError::Format(e.to_string()))?;
        let classes = s
            .classes
            .iter()
            .map(|m| {
                Ok(OneClassSvm {
                    gamma: s.gamma,
                    nu: s.nu,
                    rho: m.rho,
                    alpha: blob.get(&m.alpha)?.to_vec(),
                    support: blob.get(&m.support)?.to_vec(),
                    dim: m.dim,
                    iterations: m.iterations,
                    residual: m.residual,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            nu: s.nu,
            gamma: s.gamma,
            classes,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoredSvm {
    rho: f64,
    dim: usize,
    iterations: usize,
    residual: f64,
    alpha: ArrayRef,
    support: ArrayRef,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    nu: f64,
    gamma: f64,
    classes: Vec<StoredSvm>,
}
