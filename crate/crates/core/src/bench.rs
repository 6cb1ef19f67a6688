//! Per-sample inference overhead of each scorer.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use tsood_tensor::Tensor;

use crate::model::ModelArtifacts;
use crate::scorers::{FittedScorer, Result, SampleView, ScoreError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub warmup: usize,
    pub repeats: usize,
    /// Time the backbone forward pass together with the scorer.
    pub include_forward: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: 20,
            repeats: 100,
            include_forward: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub method: String,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub repeats: usize,
}

/// Scores single samples one at a time on the calling thread, cycling
/// through `values` (`n × d × L`). The first `warmup` calls per method are
/// discarded; the next `repeats` are timed and averaged.
pub fn overhead_benchmark(
    scorers: &[FittedScorer],
    model: &ModelArtifacts,
    values: &[f64],
    cfg: &BenchConfig,
) -> Result<Vec<OverheadRow>> {
    if cfg.warmup == 0 || cfg.repeats == 0 {
        return Err(ScoreError::InvalidParam("warmup and repeats must be at least 1".into()));
    }
    let [d, l] = model.input_shape();
    let w = d * l;
    let n = values.len() / w;
    if n == 0 || values.len() % w != 0 {
        return Err(ScoreError::InvalidParam(format!("{} values do not hold whole {d}x{l} samples", values.len())));
    }
    let forward = model.forward_batched(values, 64)?;
    let mut rows = Vec::with_capacity(scorers.len());
    for scorer in scorers {
        let mut timings = Vec::with_capacity(cfg.repeats);
        for it in 0..cfg.warmup + cfg.repeats {
            let i = it % n;
            let x = &values[i * w..(i + 1) * w];
            let start = Instant::now();
            let s = if cfg.include_forward {
                let out = model.forward(&Tensor::new(vec![1, d, l], x.to_vec())?)?;
                scorer.score(
                    model,
                    SampleView {
                        x,
                        logits: out.logits.data(),
                        prelogit: out.prelogit.data(),
                    },
                )?
            } else {
                scorer.score(
                    model,
                    SampleView {
                        x,
                        logits: forward.logits.row(i),
                        prelogit: forward.prelogit.row(i),
                    },
                )?
            };
            let ms = start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(s);
            if it >= cfg.warmup {
                timings.push(ms);
            }
        }
        rows.push(OverheadRow {
            method: scorer.method().name().to_string(),
            mean_ms: timings.iter().sum::<f64>() / timings.len() as f64,
            min_ms: timings.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: timings.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            repeats: timings.len(),
        });
    }
    Ok(rows)
}
