//! Post-hoc OOD scorers. Every score is oriented so that higher means more
//! out-of-distribution.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tsood_tensor::{logsumexp_slice, softmax_in_place, Tape, Tensor, TensorError};

use crate::data::TimeSeriesDataset;
use crate::features::{
    BlobReader, BlobWriter, FeatureError, FeaturesByClass, GaussianClassModel, IsolationForestModel,
    OcsvmClassModel, PcaClassModel,
};
use crate::model::{ModelArtifacts, ModelError};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid scorer parameter: {0}")]
    InvalidParam(String),
    #[error("unknown scoring method {0:?}")]
    UnknownMethod(String),
    #[error("scorer file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("scorer I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<TensorError> for ScoreError {
    fn from(e: TensorError) -> Self {
        ScoreError::Model(ModelError::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, ScoreError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MSP")]
    Msp,
    #[serde(rename = "ODIN")]
    Odin,
    #[serde(rename = "EBO")]
    Ebo,
    #[serde(rename = "GradNorm")]
    GradNorm,
    #[serde(rename = "ReACT")]
    React,
    #[serde(rename = "DICE")]
    Dice,
    #[serde(rename = "MDS")]
    Mds,
    #[serde(rename = "DFM-PCA")]
    DfmPca,
    #[serde(rename = "DFM-IF")]
    DfmIf,
    #[serde(rename = "DFM-OCSVM")]
    DfmOcsvm,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Msp,
        Method::Odin,
        Method::Ebo,
        Method::GradNorm,
        Method::React,
        Method::Dice,
        Method::Mds,
        Method::DfmPca,
        Method::DfmIf,
        Method::DfmOcsvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Msp => "MSP",
            Method::Odin => "ODIN",
            Method::Ebo => "EBO",
            Method::GradNorm => "GradNorm",
            Method::React => "ReACT",
            Method::Dice => "DICE",
            Method::Mds => "MDS",
            Method::DfmPca => "DFM-PCA",
            Method::DfmIf => "DFM-IF",
            Method::DfmOcsvm => "DFM-OCSVM",
        }
    }

    /// File-name form, e.g. `dfm-pca`.
    pub fn slug(self) -> String {
        self.name().to_ascii_lowercase()
    }

    /// Whether scoring uses the DFM feature models or MDS.
    pub fn is_feature_based(self) -> bool {
        matches!(self, Method::Mds | Method::DfmPca | Method::DfmIf | Method::DfmOcsvm)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.slug().replace('-', "_") == s.to_ascii_lowercase())
            .ok_or_else(|| ScoreError::UnknownMethod(s.to_string()))
    }
}

/// Tunable constants of all methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerParams {
    pub odin_temperature: f64,
    pub odin_epsilon: f64,
    /// Temperature of the energy used by EBO, ReACT and DICE.
    pub energy_temperature: f64,
    pub react_percentile: f64,
    pub dice_prune_fraction: f64,
    pub pca_retained: f64,
    pub if_trees: usize,
    pub if_subsample: usize,
    pub ocsvm_nu: f64,
    /// RBF bandwidth; `1/(F · mean feature variance)` of the ID features
    /// when absent.
    pub ocsvm_gamma: Option<f64>,
    pub seed: u64,
}

impl Default for ScorerParams {
    fn default() -> Self {
        Self {
            odin_temperature: 1000.0,
            odin_epsilon: 0.002,
            energy_temperature: 1.0,
            react_percentile: 90.0,
            dice_prune_fraction: 0.7,
            pca_retained: 0.97,
            if_trees: 100,
            if_subsample: 256,
            ocsvm_nu: 0.1,
            ocsvm_gamma: None,
            seed: 0,
        }
    }
}

impl ScorerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ScoreError::InvalidParam(m));
        if !(self.odin_temperature > 0.0 && self.energy_temperature > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if !(self.odin_epsilon >= 0.0) {
            return bad(format!("odin_epsilon {} must be non-negative", self.odin_epsilon));
        }
        if !(self.react_percentile > 0.0 && self.react_percentile <= 100.0) {
            return bad(format!("react_percentile {} outside (0, 100]", self.react_percentile));
        }
        if !(0.0..1.0).contains(&self.dice_prune_fraction) {
            return bad(format!("dice_prune_fraction {} outside [0, 1)", self.dice_prune_fraction));
        }
        if let Some(g) = self.ocsvm_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("ocsvm_gamma {g} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub method: Method,
    pub params: ScorerParams,
}

impl ScorerSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            params: ScorerParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedState {
    Stateless,
    React { threshold: f64 },
    Dice { mean_activation: Vec<f64>, mask: Vec<f64> },
    Mds(GaussianClassModel),
    Pca(PcaClassModel),
    IsolationForest(IsolationForestModel),
    Ocsvm(OcsvmClassModel),
}

/// Inputs of one sample: the normalized series and its forward outputs.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'a> {
    pub x: &'a [f64],
    pub logits: &'a [f64],
    pub prelogit: &'a [f64],
}

/// A scorer fitted on ID training data and a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedScorer {
    pub spec: ScorerSpec,
    /// Final linear layer `[C, F]` and bias `[C]`.
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub state: FittedState,
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per output unit, keeps the `max(1, ⌈(1−p)·F⌉)` largest contributions
/// `W_ij · h̄_j` (ties to the lower index) and zeroes the rest.
pub fn dice_mask(weight: &Tensor, mean_activation: &[f64], prune_fraction: f64) -> Vec<f64> {
    let (c, f) = (weight.shape()[0], weight.shape()[1]);
    let keep = (((1.0 - prune_fraction) * f as f64 - 1e-9).ceil() as usize).clamp(1, f);
    let mut mask = vec![0.0; c * f];
    for i in 0..c {
        let row = weight.row(i);
        let mut order: Vec<usize> = (0..f).collect();
        order.sort_by(|&a, &b| (row[b] * mean_activation[b]).total_cmp(&(row[a] * mean_activation[a])).then(a.cmp(&b)));
        for &j in &order[..keep] {
            mask[i * f + j] = 1.0;
        }
    }
    mask
}

/// `−T · logsumexp(z/T)`.
pub fn energy(logits: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    -temperature * logsumexp_slice(&scaled)
}

pub fn max_softmax(logits: &[f64], temperature: f64) -> f64 {
    let mut p: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    softmax_in_place(&mut p);
    p.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn head_logits(weight: &Tensor, bias: &Tensor, h: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    let f = h.len();
    (0..weight.shape()[0])
        .map(|i| {
            let w = weight.row(i);
            let dot: f64 = match mask {
                Some(m) => (0..f).map(|j| w[j] * m[i * f + j] * h[j]).sum(),
                None => w.iter().zip(h).map(|(a, b)| a * b).sum(),
            };
            dot + bias.data()[i]
        })
        .collect()
}

/// ID training features computed once and shared by every scorer fit.
pub struct IdFeatures {
    pub prelogit: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl IdFeatures {
    pub fn compute(model: &ModelArtifacts, id_train: &TimeSeriesDataset) -> Result<Self> {
        let out = model.forward_batched(id_train.values(), 64)?;
        Ok(Self {
            prelogit: out.prelogit,
            labels: id_train.labels().to_vec(),
            n_classes: model.config.n_classes,
        })
    }

    pub fn by_class(&self) -> FeaturesByClass {
        let f = self.prelogit.shape()[1];
        FeaturesByClass::from_labeled(self.prelogit.data(), f, &self.labels, self.n_classes)
    }
}

/// Fits a scorer from the trained model and ID training data only.
pub fn fit(spec: &ScorerSpec, model: &ModelArtifacts, id_train: &TimeSeriesDataset) -> Result<FittedScorer> {
    let features = IdFeatures::compute(model, id_train)?;
    fit_with_features(spec, model, &features)
}

pub fn fit_with_features(spec: &ScorerSpec, model: &ModelArtifacts, id: &IdFeatures) -> Result<FittedScorer> {
    let p = &spec.params;
    p.validate()?;
    let (w, b) = model.head();
    let state = match spec.method {
        Method::Msp | Method::Odin | Method::Ebo | Method::GradNorm => FittedState::Stateless,
        Method::React => FittedState::React {
            threshold: percentile(id.prelogit.data(), p.react_percentile),
        },
        Method::Dice => {
            let f = id.prelogit.shape()[1];
            let n = id.prelogit.shape()[0] as f64;
            let mut mean = vec![0.0; f];
            for i in 0..id.prelogit.shape()[0] {
                mean.iter_mut().zip(id.prelogit.row(i)).for_each(|(m, v)| *m += v / n);
            }
            let mask = dice_mask(w, &mean, p.dice_prune_fraction);
            FittedState::Dice {
                mean_activation: mean,
                mask,
            }
        }
        Method::Mds => FittedState::Mds(GaussianClassModel::fit(&id.by_class())?),
        Method::DfmPca => FittedState::Pca(PcaClassModel::fit(&id.by_class(), p.pca_retained)?),
        Method::DfmIf => FittedState::IsolationForest(IsolationForestModel::fit(
            &id.by_class(),
            p.if_trees,
            p.if_subsample,
            p.seed,
        )?),
        Method::DfmOcsvm => {
            let by_class = id.by_class();
            let gamma = p.ocsvm_gamma.unwrap_or_else(|| {
                let v = by_class.mean_feature_variance();
                if v > 0.0 {
                    1.0 / (by_class.dim as f64 * v)
                } else {
                    1.0
                }
            });
            FittedState::Ocsvm(OcsvmClassModel::fit(&by_class, p.ocsvm_nu, gamma)?)
        }
    };
    Ok(FittedScorer {
        spec: spec.clone(),
        head_weight: w.clone(),
        head_bias: b.clone(),
        state,
    })
}

/// Per-sample scores plus the wall-clock time spent on each.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchScores {
    pub scores: Vec<f64>,
    pub latency_ms: Vec<f64>,
}

impl FittedScorer {
    pub fn method(&self) -> Method {
        self.spec.method
    }

    /// Scores one sample given its forward outputs. ODIN additionally runs
    /// the model on the perturbed input.
    pub fn score(&self, model: &ModelArtifacts, s: SampleView<'_>) -> Result<f64> {
        let p = &self.spec.params;
        let score = match &self.state {
            FittedState::Stateless => match self.spec.method {
                Method::Msp => -max_softmax(s.logits, 1.0),
                Method::Odin => self.score_odin(model, s)?,
                Method::Ebo => energy(s.logits, p.energy_temperature),
                Method::GradNorm => self.score_gradnorm(s.prelogit)?,
                m => unreachable!("{m} always carries fitted state"),
            },
            FittedState::React { threshold } => {
                let clipped: Vec<f64> = s.prelogit.iter().map(|h| h.min(*threshold)).collect();
                energy(&head_logits(&self.head_weight, &self.head_bias, &clipped, None), p.energy_temperature)
            }
            FittedState::Dice { mask, .. } => energy(
                &head_logits(&self.head_weight, &self.head_bias, s.prelogit, Some(mask)),
                p.energy_temperature,
            ),
            FittedState::Mds(g) => min(g.mahalanobis_distance(s.prelogit)),
            FittedState::Pca(m) => min(m.reconstruction_error(s.prelogit)),
            FittedState::IsolationForest(m) => min(m.anomaly_scores(s.prelogit)),
            FittedState::Ocsvm(m) => -max(m.decision(s.prelogit)),
        };
        Ok(score)
    }

    /// `x̃ = x − ε·sign(∇ₓ[−log max softmax(f(x)/T)])`, scored as the negated
    /// temperature-scaled max softmax of `f(x̃)`.
    fn score_odin(&self, model: &ModelArtifacts, s: SampleView<'_>) -> Result<f64> {
        let (t, eps) = (self.spec.params.odin_temperature, self.spec.params.odin_epsilon);
        if eps == 0.0 {
            return Ok(-max_softmax(s.logits, t));
        }
        let [d, l] = model.input_shape();
        let x = Tensor::new(vec![1, d, l], s.x.to_vec())?;
        let grad = model.input_gradient(&x, |tape, logits| {
            let scaled = tape.mul_scalar(logits, 1.0 / t)?;
            let lse = tape.logsumexp(scaled)?;
            let top = tape.max_axis(scaled, 1)?;
            tape.sum(tape.sub(lse, top)?)
        })?;
        let perturbed: Vec<f64> = s
            .x
            .iter()
            .zip(grad.data())
            .map(|(xi, g)| xi - eps * sign(*g))
            .collect();
        let out = model.forward(&Tensor::new(vec![1, d, l], perturbed)?)?;
        Ok(-max_softmax(out.logits.data(), t))
    }

    /// `−‖∂L/∂W‖₁` with `L = (1/C) Σᵢ −log softmax(z)ᵢ` and `W` the head weight.
    fn score_gradnorm(&self, prelogit: &[f64]) -> Result<f64> {
        let tape = Tape::new();
        let w = tape.param(self.head_weight.clone());
        let b = tape.constant(self.head_bias.clone());
        let h = tape.constant(Tensor::new(vec![1, prelogit.len()], prelogit.to_vec())?);
        let z = tape.linear(h, w, Some(b))?;
        // −log softmax_i = lse(z) − z_i, averaged over i.
        let lse = tape.logsumexp(z)?;
        let mean_z = tape.mean_axis(z, 1)?;
        let loss = tape.sum(tape.sub(lse, mean_z)?)?;
        let grads = tape.backward(loss)?;
        let g = grads.get(w).expect("head weight requires grad");
        Ok(-g.data().iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Forward (unless `forward` is supplied) and score one sample.
    pub fn score_sample(&self, model: &ModelArtifacts, x: &[f64]) -> Result<f64> {
        let [d, l] = model.input_shape();
        let out = model.forward(&Tensor::new(vec![1, d, l], x.to_vec())?)?;
        self.score(
            model,
            SampleView {
                x,
                logits: out.logits.data(),
                prelogit: out.prelogit.data(),
            },
        )
    }

    /// Scores every instance of `values` (`n × d × L`) sequentially, one at
    /// a time, timing each. With `include_forward` the per-sample forward
    /// pass is inside the timed region; otherwise the batch forward pass is
    /// shared and only the scoring step is timed.
    pub fn score_batch(&self, model: &ModelArtifacts, values: &[f64], include_forward: bool) -> Result<BatchScores> {
        let shared = if include_forward {
            None
        } else {
            Some(model.forward_batched(values, 64)?)
        };
        score_instances(std::slice::from_ref(self), model, values, shared.as_ref())
            .map(|mut v| v.pop().expect("one scorer"))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn min(v: Vec<f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

fn max(v: Vec<f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Scores all instances with several scorers. `shared` holds the batch
/// forward outputs; when absent each sample is forwarded inside its timed
/// region, separately for every scorer.
pub fn score_instances(
    scorers: &[FittedScorer],
    model: &ModelArtifacts,
    values: &[f64],
    shared: Option<&crate::model::ForwardOutputs>,
) -> Result<Vec<BatchScores>> {
    let [d, l] = model.input_shape();
    let w = d * l;
    let n = values.len() / w;
    let mut out = Vec::with_capacity(scorers.len());
    for scorer in scorers {
        let mut scores = Vec::with_capacity(n);
        let mut latency = Vec::with_capacity(n);
        for i in 0..n {
            let x = &values[i * w..(i + 1) * w];
            let start = Instant::now();
            let s = match shared {
                Some(fwd) => scorer.score(
                    model,
                    SampleView {
                        x,
                        logits: fwd.logits.row(i),
                        prelogit: fwd.prelogit.row(i),
                    },
                )?,
                None => scorer.score_sample(model, x)?,
            };
            latency.push(start.elapsed().as_secs_f64() * 1e3);
            scores.push(s);
        }
        out.push(BatchScores {
            scores,
            latency_ms: latency,
        });
    }
    Ok(out)
}

pub const SCORER_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredScorer {
    schema_version: u32,
    method: Method,
    params: ScorerParams,
    head_shape: Vec<usize>,
    head_weight: crate::features::ArrayRef,
    head_bias: crate::features::ArrayRef,
    state: serde_json::Value,
}

impl FittedScorer {
    pub fn file_stem(&self) -> String {
        format!("scorer_{}", self.method().slug())
    }

    /// Writes `scorer_<name>.json` and `scorer_<name>.bin` (little-endian
    /// `f64`) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut blob = BlobWriter::new();
        let head_weight = blob.push(self.head_weight.data());
        let head_bias = blob.push(self.head_bias.data());
        let state = match &self.state {
            FittedState::Stateless => serde_json::json!({ "kind": "stateless" }),
            FittedState::React { threshold } => serde_json::json!({ "kind": "react", "threshold": threshold }),
            FittedState::Dice { mean_activation, mask } => serde_json::json!({
                "kind": "dice",
                "mean_activation": blob.push(mean_activation),
                "mask": blob.push(mask),
            }),
            FittedState::Mds(m) => serde_json::json!({ "kind": "mds", "model": m.save(&mut blob) }),
            FittedState::Pca(m) => serde_json::json!({ "kind": "pca", "model": m.save(&mut blob) }),
            FittedState::IsolationForest(m) => serde_json::json!({ "kind": "iforest", "model": m.save(&mut blob) }),
            FittedState::Ocsvm(m) => serde_json::json!({ "kind": "ocsvm", "model": m.save(&mut blob) }),
        };
        let stored = StoredScorer {
            schema_version: SCORER_SCHEMA_VERSION,
            method: self.method(),
            params: self.spec.params.clone(),
            head_shape: self.head_weight.shape().to_vec(),
            head_weight,
            head_bias,
            state,
        };
        let stem = self.file_stem();
        let jpath = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&stored).expect("serializable");
        fs::write(&jpath, json + "\n").map_err(|source| ScoreError::Io {
            path: jpath.display().to_string(),
            source,
        })?;
        let bpath = dir.join(format!("{stem}.bin"));
        fs::write(&bpath, blob.into_bytes()).map_err(|source| ScoreError::Io {
            path: bpath.display().to_string(),
            source,
        })
    }

    pub fn load(dir: &Path, method: Method) -> Result<Self> {
        let stem = format!("scorer_{}", method.slug());
        let jpath = dir.join(format!("{stem}.json"));
        let bpath = dir.join(format!("{stem}.bin"));
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ScoreError::Io { path, source }
        };
        let text = fs::read_to_string(&jpath).map_err(io(&jpath))?;
        let bytes = fs::read(&bpath).map_err(io(&bpath))?;
        let fmt = |reason: String| ScoreError::Format {
            path: jpath.display().to_string(),
            reason,
        };
        let stored: StoredScorer = serde_json::from_str(&text).map_err(|e| fmt(e.to_string()))?;
        if stored.schema_version != SCORER_SCHEMA_VERSION || stored.method != method {
            return Err(fmt("schema version or method mismatch".into()));
        }
        let blob = BlobReader::from_bytes(&bytes)?;
        let head_weight = Tensor::new(stored.head_shape.clone(), blob.get(&stored.head_weight)?.to_vec())?;
        let head_bias = Tensor::new(vec![stored.head_shape[0]], blob.get(&stored.head_bias)?.to_vec())?;
        let kind = stored.state["kind"].as_str().unwrap_or_default();
        let model = &stored.state["model"];
        let array = |key: &str| -> Result<Vec<f64>> {
            let r: crate::features::ArrayRef =
                serde_json::from_value(stored.state[key].clone()).map_err(|e| fmt(e.to_string()))?;
            Ok(blob.get(&r)?.to_vec())
        };
        let state = match kind {
            "stateless" => FittedState::Stateless,
            "react" => FittedState::React {
                threshold: stored.state["threshold"]
                    .as_f64()
                    .ok_or_else(|| fmt("react threshold".into()))?,
            },
            "dice" => FittedState::Dice {
                mean_activation: array("mean_activation")?,
                mask: array("mask")?,
            },
            "mds" => FittedState::Mds(GaussianClassModel::load(model, &blob)?),
            "pca" => FittedState::Pca(PcaClassModel::load(model, &blob)?),
            "iforest" => FittedState::IsolationForest(IsolationForestModel::load(model, &blob)?),
            "ocsvm" => FittedState::Ocsvm(OcsvmClassModel::load(model, &blob)?),
            other => return Err(fmt(format!("unknown state kind {other:?}"))),
        };
        Ok(Self {
            spec: ScorerSpec {
                method,
                params: stored.params,
            },
            head_weight,
            head_bias,
            state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.slug().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("KNN".parse::<Method>().is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert!((percentile(&v, 50.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn energy_and_msp_examples() {
        assert!((energy(&[0.0, 0.0], 1.0) + 2f64.ln()).abs() < 1e-12);
        let e2 = 2f64.exp();
        assert!((-max_softmax(&[2.0, 0.0, 0.0], 1.0) + e2 / (e2 + 2.0)).abs() < 1e-12);
        assert!((-max_softmax(&[2.0, 0.0, 0.0], 1.0) + 0.7869).abs() < 1e-4);
    }
}
