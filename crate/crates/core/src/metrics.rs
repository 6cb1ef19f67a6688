//! Threshold-free detection metrics and the ID-accuracy correlation study.
//! Labels use `1` for OOD (the positive class) and `0` for ID.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric needs both classes, got {positives} OOD and {negatives} ID")]
    SingleClass { positives: usize, negatives: usize },
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("zero variance input")]
    ZeroVariance,
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Mann–Whitney AUROC with midranks for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are doubled so that midranks stay integral.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        rank_sum2 += mid2 * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        i = j + 1;
    }
    let (p, n) = (pos as u64, neg as u64);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Average precision `Σ_k (R_k − R_{k−1})·P_k` over descending thresholds,
/// one threshold per distinct score.
pub fn aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 {
        return Err(MetricError::SingleClass {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let group_tp = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        tp += group_tp;
        fp += j + 1 - i - group_tp;
        if group_tp > 0 {
            ap += group_tp as f64 / pos as f64 * (tp as f64 / (tp + fp) as f64);
        }
        i = j + 1;
    }
    Ok(ap)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewPoints(x.len()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(MetricError::ZeroVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One dataset's contribution to the correlation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRun {
    pub dataset: String,
    pub id_accuracy: f64,
    pub auroc: IndexMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub method: String,
    /// `None` when either side has zero variance.
    pub pcc: Option<f64>,
    pub n_datasets: usize,
    /// Two points always give ±1.
    pub degenerate: bool,
}

/// Per method, Pearson correlation between ID accuracy and AUROC across
/// runs. Methods follow first-appearance order.
pub fn correlation_study(runs: &[CorrelationRun]) -> Result<Vec<CorrelationRow>> {
    if runs.len() < 2 {
        return Err(MetricError::TooFewPoints(runs.len()));
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in runs {
        for m in r.auroc.keys() {
            if !methods.contains(&m.as_str()) {
                methods.push(m);
            }
        }
    }
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        let (acc, au): (Vec<f64>, Vec<f64>) = runs
            .iter()
            .filter_map(|r| r.auroc.get(m).map(|a| (r.id_accuracy, *a)))
            .unzip();
        let pcc = match pearson(&acc, &au) {
            Ok(v) => Some(v),
            Err(MetricError::ZeroVariance) | Err(MetricError::TooFewPoints(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(CorrelationRow {
            method: m.to_string(),
            pcc,
            n_datasets: acc.len(),
            degenerate: acc.len() == 2,
        });
    }
    Ok(rows)
}
