//! Per-class models over pre-logit features.

mod gaussian;
mod iforest;
mod ocsvm;
mod pca;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gaussian::GaussianClassModel;
pub use iforest::{average_path_length, harmonic, score_from_path, IsolationForest, IsolationForestModel, IsolationTree};
pub use ocsvm::{OcsvmClassModel, OneClassSvm, OCSVM_MAX_ITER, OCSVM_TOL};
pub use pca::{fit_subspace, PcaClassModel, PcaSubspace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("class {class} has {count} samples, at least {needed} needed")]
    InsufficientSamples { class: usize, count: usize, needed: usize },
    #[error("one-class SVM stopped after {iterations} iterations with KKT residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("malformed serialized model: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Feature rows grouped by class, each class stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturesByClass {
    pub dim: usize,
    pub per_class: Vec<Vec<f64>>,
}

impl FeaturesByClass {
    pub fn new(dim: usize, per_class: Vec<Vec<f64>>) -> Self {
        assert!(dim > 0 && per_class.iter().all(|c| c.len() % dim == 0));
        Self { dim, per_class }
    }

    /// Groups row-major `features` (`labels.len() × dim`) by label.
    pub fn from_labeled(features: &[f64], dim: usize, labels: &[usize], n_classes: usize) -> Self {
        assert_eq!(features.len(), labels.len() * dim);
        let mut per_class = vec![Vec::new(); n_classes];
        for (row, &l) in features.chunks(dim).zip(labels) {
            per_class[l].extend_from_slice(row);
        }
        Self { dim, per_class }
    }

    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn count(&self, class: usize) -> usize {
        self.per_class[class].len() / self.dim
    }

    pub fn rows(&self, class: usize) -> std::slice::Chunks<'_, f64> {
        self.per_class[class].chunks(self.dim)
    }

    pub fn total(&self) -> usize {
        (0..self.n_classes()).map(|c| self.count(c)).sum()
    }

    pub fn require(&self, needed: usize) -> Result<()> {
        for c in 0..self.n_classes() {
            let count = self.count(c);
            if count < needed {
                return Err(FeatureError::InsufficientSamples { class: c, count, needed });
            }
        }
        Ok(())
    }

    /// Mean over all classes of the per-feature variance of the pooled rows.
    pub fn mean_feature_variance(&self) -> f64 {
        let n = self.total() as f64;
        let mut mean = vec![0.0; self.dim];
        for c in 0..self.n_classes() {
            for row in self.rows(c) {
                mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
            }
        }
        let mut var = 0.0;
        for c in 0..self.n_classes() {
            for row in self.rows(c) {
                var += row.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>();
            }
        }
        var / (n * self.dim as f64)
    }
}

/// Location of an array inside a blob of little-endian `f64`s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayRef {
    pub offset: usize,
    pub len: usize,
}

#[derive(Default, Debug)]
pub struct BlobWriter {
    data: Vec<f64>,
}

impl BlobWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, values: &[f64]) -> ArrayRef {
        let r = ArrayRef {
            offset: self.data.len(),
            len: values.len(),
        };
        self.data.extend_from_slice(values);
        r
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

pub struct BlobReader {
    data: Vec<f64>,
}

impl BlobReader {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(FeatureError::Format(format!("blob length {} is not a multiple of 8", bytes.len())));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { data })
    }

    pub fn get(&self, r: &ArrayRef) -> Result<&[f64]> {
        self.data
            .get(r.offset..r.offset + r.len)
            .ok_or_else(|| FeatureError::Format(format!("array {}+{} outside blob", r.offset, r.len)))
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
