use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ArrayRef, BlobReader, BlobWriter, FeatureError, FeaturesByClass, Result};

/// Slack on the cumulative explained-variance comparison, so that a
/// retained fraction of 1.0 is reached despite rounding.
const RETAIN_SLACK: f64 = 1e-12;

/// Principal subspace of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaSubspace {
    pub mean: Vec<f64>,
    /// `k × F` orthonormal rows, row-major.
    pub components: Vec<f64>,
    pub k: usize,
    /// Explained-variance ratio of every singular direction, descending.
    pub explained_ratio: Vec<f64>,
}

impl PcaSubspace {
    pub fn component(&self, i: usize) -> &[f64] {
        let f = self.mean.len();
        &self.components[i * f..(i + 1) * f]
    }

    /// `‖(x − m) − VᵀV(x − m)‖²`.
    pub fn reconstruction_error(&self, x: &[f64]) -> f64 {
        let f = self.mean.len();
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let mut residual = centered.clone();
        for i in 0..self.k {
            let v = &self.components[i * f..(i + 1) * f];
            let coef: f64 = v.iter().zip(&centered).map(|(a, b)| a * b).sum();
            residual.iter_mut().zip(v).for_each(|(r, vi)| *r -= coef * vi);
        }
        residual.iter().map(|r| r * r).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaClassModel {
    pub retained: f64,
    pub classes: Vec<PcaSubspace>,
}

/// Centers `rows`, takes the SVD of the centered data and keeps the
/// smallest prefix of right singular vectors whose variance share reaches
/// `retained`.
pub fn fit_subspace<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize, retained: f64) -> PcaSubspace {
    let rows: Vec<&[f64]> = rows.collect();
    let n = rows.len();
    let mut mean = vec![0.0; dim];
    for r in &rows {
        mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v / n as f64);
    }
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let variances: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let total: f64 = variances.iter().sum();
    let explained_ratio: Vec<f64> = if total > 0.0 {
        variances.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; variances.len()]
    };
    let mut k = 0;
    if total > 0.0 {
        let mut cum = 0.0;
        for r in &explained_ratio {
            k += 1;
            cum += r;
            if cum >= retained - RETAIN_SLACK {
                break;
            }
        }
    }
    let mut components = Vec::with_capacity(k * dim);
    for i in 0..k {
        components.extend((0..dim).map(|j| v_t[(i, j)]));
    }
    PcaSubspace {
        mean,
        components,
        k,
        explained_ratio,
    }
}

impl PcaClassModel {
    pub fn fit(features: &FeaturesByClass, retained: f64) -> Result<Self> {
        if !(retained > 0.0 && retained <= 1.0) {
            return Err(FeatureError::InvalidParam(format!("retained variance {retained} outside (0, 1]")));
        }
        features.require(2)?;
        let classes = (0..features.n_classes())
            .map(|c| fit_subspace(features.rows(c), features.dim, retained))
            .collect();
        Ok(Self { retained, classes })
    }

    pub fn reconstruction_error(&self, x: &[f64]) -> Vec<f64> {
        self.classes.iter().map(|s| s.reconstruction_error(x)).collect()
    }

    pub fn save(&self, blob: &mut BlobWriter) -> serde_json::Value {
        let classes = self
            .classes
            .iter()
            .map(|s| StoredSubspace {
                k: s.k,
                mean: blob.push(&s.mean),
                components: blob.push(&s.components),
                explained_ratio: blob.push(&s.explained_ratio),
            })
            .collect();
        serde_json::to_value(Stored {
            retained: self.retained,
            classes,
        })
        .expect("plain struct")
    }

    pub fn load(value: &serde_json::Value, blob: &BlobReader) -> Result<Self> {
        let s: Stored = serde_json::from_value(value.clone()).map_err(|e| FeatureError::Format(e.to_string()))?;
        let classes = s
            .classes
            .iter()
            .map(|c| {
                Ok(PcaSubspace {
                    mean: blob.get(&c.mean)?.to_vec(),
                    components: blob.get(&c.components)?.to_vec(),
                    k: c.k,
                    explained_ratio: blob.get(&c.explained_ratio)?.to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            retained: s.retained,
            classes,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoredSubspace {
    k: usize,
    mean: ArrayRef,
    components: ArrayRef,
    explained_ratio: ArrayRef,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    retained: f64,
    classes: Vec<StoredSubspace>,
}
