use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ArrayRef, BlobReader, BlobWriter, FeatureError, FeaturesByClass, Result};
use crate::seed::{self, Rng};

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Average path length of an unsuccessful binary-search-tree lookup among
/// `n` points, `c(n) = 2H(n−1) − 2(n−1)/n`.
pub fn average_path_length(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// One isolation tree stored as a flat node array, root first.
#[derive(Clone, Debug, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow(data: &[&[f64]], idx: &mut [usize], depth: usize, limit: usize, rng: &mut Rng, nodes: &mut Vec<Node>) -> usize {
        let at = nodes.len();
        nodes.push(Node::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return at;
        }
        let dim = data[idx[0]].len();
        let feature = rng.random_range(0..dim);
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(data[i][feature]), hi.max(data[i][feature]))
        });
        if lo >= hi {
            return at;
        }
        let threshold = rng.random_range(lo..hi);
        let mut split = 0;
        for k in 0..idx.len() {
            if data[idx[k]][feature] < threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = Self::grow(data, l, depth + 1, limit, rng, nodes);
        let right = Self::grow(data, r, depth + 1, limit, rng, nodes);
        nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    /// Path length of `x` including the `c(size)` credit at the leaf.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Residual sizes of all leaves.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { size } => Some(*size),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

/// Forest over one class.
#[derive(Clone, Debug, PartialEq)]
pub struct IsolationForest {
    pub subsample: usize,
    pub trees: Vec<IsolationTree>,
}

impl IsolationForest {
    /// `n_trees` trees, each on `min(ψ, n)` points drawn without replacement,
    /// depth limited to `⌈log₂ ψ⌉`.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, n_trees: usize, psi: usize, rng: &mut Rng) -> Self {
        let data: Vec<&[f64]> = rows.collect();
        let subsample = psi.min(data.len());
        let limit = (subsample.max(2) as f64).log2().ceil() as usize;
        let trees = (0..n_trees)
            .map(|_| {
                let mut idx = index::sample(rng, data.len(), subsample).into_vec();
                let mut nodes = Vec::new();
                IsolationTree::grow(&data, &mut idx, 0, limit, rng, &mut nodes);
                IsolationTree { nodes }
            })
            .collect();
        Self { subsample, trees }
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// `2^(−E[h(x)]/c(ψ))`.
    pub fn anomaly_score(&self, x: &[f64]) -> f64 {
        score_from_path(self.mean_path_length(x), self.subsample)
    }
}

pub fn score_from_path(mean_path: f64, subsample: usize) -> f64 {
    let c = average_path_length(subsample);
    if c == 0.0 {
        return 0.5;
    }
    2f64.powf(-mean_path / c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsolationForestModel {
    pub n_trees: usize,
    pub psi: usize,
    pub forests: Vec<IsolationForest>,
}

impl IsolationForestModel {
    pub fn fit(features: &FeaturesByClass, n_trees: usize, psi: usize, seed_value: u64) -> Result<Self> {
        if psi < 2 {
            return Err(FeatureError::InvalidParam(format!("subsample size {psi} must be at least 2")));
        }
        if n_trees == 0 {
            return Err(FeatureError::InvalidParam("n_trees must be positive".into()));
        }
        features.require(1)?;
        let forests = (0..features.n_classes())
            .map(|c| {
                let mut rng = seed::rng(seed::derive(seed_value, &format!("iforest-class-{c}")));
                IsolationForest::fit(features.rows(c), n_trees, psi, &mut rng)
            })
            .collect();
        Ok(Self { n_trees, psi, forests })
    }

    pub fn anomaly_scores(&self, x: &[f64]) -> Vec<f64> {
        self.forests.iter().map(|f| f.anomaly_score(x)).collect()
    }

    pub fn save(&self, blob: &mut BlobWriter) -> serde_json::Value {
        let forests = self
            .forests
            .iter()
            .map(|f| StoredForest {
                subsample: f.subsample,
                trees: f
                    .trees
                    .iter()
                    .map(|t| {
                        // Five columns per node: kind, feature|size, threshold, left, right.
                        let mut flat = Vec::with_capacity(5 * t.nodes.len());
                        for n in &t.nodes {
                            match *n {
                                Node::Split {
                                    feature,
                                    threshold,
                                    left,
                                    right,
                                } => flat.extend([1.0, feature as f64, threshold, left as f64, right as f64]),
                                Node::Leaf { size } => flat.extend([0.0, size as f64, 0.0, 0.0, 0.0]),
                            }
                        }
                        blob.push(&flat)
                    })
                    .collect(),
            })
            .collect();
        serde_json::to_value(Stored {
            n_trees: self.n_trees,
            psi: self.psi,
            forests,
        })
        .expect("plain struct")
    }

    pub fn load(value: &serde_json::Value, blob: &BlobReader) -> Result<Self> {
        let s: Stored = serde_json::from_value(value.clone()).map_err(|e| FeatureError::Format(e.to_string()))?;
        let mut forests = Vec::with_capacity(s.forests.len());
        for f in &s.forests {
            let mut trees = Vec::with_capacity(f.trees.len());
            for r in &f.trees {
                let flat = blob.get(r)?;
                if flat.len() % 5 != 0 {
                    return Err(FeatureError::Format("tree record length".into()));
                }
                let nodes = flat
                    .chunks(5)
                    .map(|c| {
                        if c[0] == 1.0 {
                            Node::Split {
                                feature: c[1] as usize,
                                threshold: c[2],
                                left: c[3] as usize,
                                right: c[4] as usize,
                            }
                        } else {
                            Node::Leaf { size: c[1] as usize }
                        }
                    })
                    .collect();
                trees.push(IsolationTree { nodes });
            }
            forests.push(IsolationForest {
                subsample: f.subsample,
                trees,
            });
        }
        Ok(Self {
            n_trees: s.n_trees,
            psi: s.psi,
            forests,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoredForest {
    subsample: usize,
    trees: Vec<ArrayRef>,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    n_trees: usize,
    psi: usize,
    forests: Vec<StoredForest>,
}
