//! Cross-entropy and multi-positive contrastive training.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tsood_tensor::{Tape, Tensor, TensorError, Var};

use crate::augment::Augmentation;
use crate::data::TimeSeriesDataset;
use crate::model::{is_buffer, ModelArtifacts, ModelError, WeightMap};
use crate::seed;

pub const LOG_FLOOR: f64 = 1e-12;
/// Added to excluded similarity logits; large enough that `exp` underflows
/// to zero after the max shift while staying finite.
const EXCLUDED_LOGIT: f64 = -1e30;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("anchor {anchor} has no matching candidate")]
    NoPositive { anchor: usize },
    #[error("loss diverged at epoch {epoch}, step {step} (last finite loss {last_finite:?})")]
    DivergedLoss {
        epoch: usize,
        step: usize,
        last_finite: Option<f64>,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("writing train log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "ce", alias = "CE")]
    Ce,
    #[serde(rename = "mpc", alias = "MPC")]
    Mpc,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Mpc => "mpc",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    /// View generator for MPC. CE ignores it unless `augment_ce` is set.
    pub augmentation: Option<Augmentation>,
    pub augment_ce: bool,
    pub probe_epochs: usize,
    pub projection_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Ce,
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            temperature: 0.07,
            augmentation: None,
            augment_ce: false,
            probe_epochs: 50,
            projection_dim: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if self.projection_dim == 0 {
            return bad("projection_dim must be positive");
        }
        Ok(())
    }

    /// Views for MPC; jitter with default parameters when none is configured.
    pub fn view_augmentation(&self) -> Augmentation {
        self.augmentation
            .clone()
            .unwrap_or(Augmentation::Jitter { sigma: 0.03 })
    }
}

/// `−Σ yᵢ log pᵢ` for one-hot `y` on `label`, with probabilities floored.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(LOG_FLOOR).ln()
}

/// Cross-entropy of one logit row, `logsumexp(z) − z_y`.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> f64 {
    tsood_tensor::logsumexp_slice(logits) - logits[label]
}

/// Mean cross-entropy of `logits: [b, C]` against `labels` on the tape.
pub fn cross_entropy_loss(tape: &Tape, logits: Var, labels: &[usize]) -> tsood_tensor::Result<Var> {
    let shape = tape.shape(logits);
    let c = shape[1];
    let mut onehot = vec![0.0; labels.len() * c];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * c + l] = 1.0;
    }
    let onehot = tape.constant(Tensor::new(vec![labels.len(), c], onehot)?);
    let lse = tape.logsumexp(logits)?;
    let picked = tape.sum_axis(tape.mul(logits, onehot)?, 1)?;
    tape.mean(tape.sub(lse, picked)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Match {
    Positive,
    Negative,
    /// Left out of the softmax entirely (the anchor itself).
    Excluded,
}

/// Anchor × candidate relation for the contrastive loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchMatrix {
    pub anchors: usize,
    pub candidates: usize,
    entries: Vec<Match>,
}

impl MatchMatrix {
    pub fn new(anchors: usize, candidates: usize, entries: Vec<Match>) -> Self {
        assert_eq!(entries.len(), anchors * candidates);
        Self {
            anchors,
            candidates,
            entries,
        }
    }

    /// Candidates are the anchors themselves; same label matches, the
    /// diagonal is excluded.
    pub fn supervised(labels: &[usize]) -> Self {
        let n = labels.len();
        let entries = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j {
                    Match::Excluded
                } else if labels[i] == labels[j] {
                    Match::Positive
                } else {
                    Match::Negative
                }
            })
            .collect();
        Self::new(n, n, entries)
    }

    pub fn get(&self, anchor: usize, candidate: usize) -> Match {
        self.entries[anchor * self.candidates + candidate]
    }
}

/// Multi-positive contrastive loss over `anchors: [A, E]` and
/// `candidates: [K, E]`: softmax over `a·b/τ` against the normalized match
/// distribution, averaged over anchors.
pub fn mpc_loss(tape: &Tape, anchors: Var, candidates: Var, matches: &MatchMatrix, tau: f64) -> Result<Var> {
    let (a, k) = (matches.anchors, matches.candidates);
    let mut target = vec![0.0; a * k];
    let mut mask = vec![0.0; a * k];
    for i in 0..a {
        let positives = (0..k).filter(|&j| matches.get(i, j) == Match::Positive).count();
        if positives == 0 {
            return Err(TrainError::NoPositive { anchor: i });
        }
        for j in 0..k {
            match matches.get(i, j) {
                Match::Positive => target[i * k + j] = 1.0 / positives as f64,
                Match::Excluded => mask[i * k + j] = EXCLUDED_LOGIT,
                Match::Negative => {}
            }
        }
    }
    let sims = tape.matmul(anchors, tape.transpose(candidates, 0, 1)?)?;
    let sims = tape.mul_scalar(sims, 1.0 / tau)?;
    let masked = tape.add(sims, tape.constant(Tensor::new(vec![a, k], mask)?))?;
    let lse = tape.logsumexp(masked)?;
    let target = tape.constant(Tensor::new(vec![a, k], target)?);
    let expected = tape.sum_axis(tape.mul(sims, target)?, 1)?;
    Ok(tape.mean(tape.sub(lse, expected)?)?)
}

/// Rows of `x: [n, E]` scaled to unit ℓ2 norm.
pub fn l2_normalize(tape: &Tape, x: Var) -> tsood_tensor::Result<Var> {
    let n = tape.shape(x)[0];
    let sq = tape.sum_axis(tape.mul(x, x)?, 1)?;
    let norm = tape.sqrt(tape.add_scalar(sq, 1e-12)?)?;
    tape.div(x, tape.reshape(norm, &[n, 1])?)
}

/// Adam over every trainable entry of a weight map.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: IndexMap<String, Vec<f64>>,
    v: IndexMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    pub fn step(&mut self, weights: &mut WeightMap, grads: &[(String, Tensor)]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let w = Arc::make_mut(weights.get_mut(name).expect("gradient for a known weight"));
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *wi -= self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub loss: f64,
    pub id_val_accuracy: Option<f64>,
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let err = |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(err)?);
    let mut write = || -> std::io::Result<()> {
        writeln!(f, "epoch,loss,id_val_accuracy")?;
        for r in rows {
            let acc = r.id_val_accuracy.map(|a| a.to_string()).unwrap_or_default();
            writeln!(f, "{},{},{}", r.epoch, r.loss, acc)?;
        }
        f.flush()
    };
    write().map_err(err)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy_from_logits(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(logits.row(i)) == l)
        .count();
    correct as f64 / labels.len() as f64
}

const EVAL_CHUNK: usize = 64;

pub fn evaluate_id_accuracy(model: &ModelArtifacts, id_test: &TimeSeriesDataset) -> Result<f64> {
    if id_test.is_empty() {
        return Ok(0.0);
    }
    let out = model.forward_batched(id_test.values(), EVAL_CHUNK)?;
    Ok(accuracy_from_logits(&out.logits, id_test.labels()))
}

fn batch_tensor(ds: &TimeSeriesDataset, rows: impl Iterator<Item = Vec<f64>>, n: usize) -> Result<Tensor> {
    let data: Vec<f64> = rows.flatten().collect();
    Ok(Tensor::new(vec![n, ds.dims(), ds.length()], data)?)
}

fn trainable_grads(vars: &IndexMap<String, Var>, mut grads: tsood_tensor::Gradients) -> Vec<(String, Tensor)> {
    vars.iter()
        .filter_map(|(n, v)| grads.remove(*v).map(|g| (n.clone(), g)))
        .collect()
}

struct Progress {
    last_finite: Option<f64>,
}

impl Progress {
    fn check(&mut self, loss: f64, epoch: usize, step: usize) -> Result<()> {
        if !loss.is_finite() {
            return Err(TrainError::DivergedLoss {
                epoch,
                step,
                last_finite: self.last_finite,
            });
        }
        self.last_finite = Some(loss);
        Ok(())
    }
}

/// Maps tensor errors raised by non-finite activations onto `DivergedLoss`.
fn diverged(e: TrainError, epoch: usize, step: usize, progress: &Progress) -> TrainError {
    match e {
        TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. })) => TrainError::DivergedLoss {
            epoch,
            step,
            last_finite: progress.last_finite,
        },
        other => other,
    }
}

/// Trains `model` on normalized ID training data. `val` (optional) is only
/// used for the per-epoch accuracy column of the log.
pub fn train(
    mut model: ModelArtifacts,
    id_train: &TimeSeriesDataset,
    val: Option<&TimeSeriesDataset>,
    cfg: &TrainConfig,
) -> Result<(ModelArtifacts, Vec<TrainLogRow>)> {
    cfg.validate()?;
    if id_train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    model.check_input(&[1, id_train.dims(), id_train.length()])?;
    if let Some(&bad) = id_train.labels().iter().find(|&&l| l >= model.config.n_classes) {
        return Err(TrainError::InvalidConfig(format!(
            "label {bad} exceeds the model's {} classes",
            model.config.n_classes
        )));
    }
    let log = match cfg.loss {
        LossKind::Ce => train_ce(&mut model, id_train, val, cfg)?,
        LossKind::Mpc => {
            let mut log = train_mpc(&mut model, id_train, cfg)?;
            let probe = linear_probe(&mut model, id_train, val, cfg)?;
            let offset = log.len();
            log.extend(probe.into_iter().map(|mut r| {
                r.epoch += offset;
                r
            }));
            log
        }
    };
    model.round_to_f32();
    let per_epoch = id_train.len().div_ceil(cfg.batch_size);
    let steps = match cfg.loss {
        LossKind::Ce => cfg.epochs * per_epoch,
        LossKind::Mpc => (cfg.epochs + cfg.probe_epochs) * per_epoch,
    };
    let train_acc = evaluate_id_accuracy(&model, id_train)?;
    model.meta = crate::model::TrainingMeta {
        loss: cfg.loss.name().to_string(),
        epochs: cfg.epochs,
        steps,
        final_train_accuracy: Some(train_acc),
        final_val_accuracy: match val {
            Some(v) => Some(evaluate_id_accuracy(&model, v)?),
            None => None,
        },
        final_loss: log.last().map(|r| r.loss),
    };
    Ok((model, log))
}

fn val_accuracy(model: &ModelArtifacts, val: Option<&TimeSeriesDataset>) -> Result<Option<f64>> {
    val.map(|v| evaluate_id_accuracy(model, v)).transpose()
}

fn train_ce(
    model: &mut ModelArtifacts,
    ds: &TimeSeriesDataset,
    val: Option<&TimeSeriesDataset>,
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogRow>> {
    let mut rng = seed::rng(seed::derive(cfg.seed, "ce-shuffle"));
    let mut aug_rng = seed::rng(seed::derive(cfg.seed, "ce-augment"));
    let augmentation = cfg.augment_ce.then(|| cfg.view_augmentation());
    let mut adam = Adam::new(cfg.learning_rate);
    let mut progress = Progress { last_finite: None };
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let rows = idx.iter().map(|&i| match &augmentation {
                Some(a) => a.apply(ds.instance(i), ds.dims(), &mut aug_rng),
                None => ds.instance(i).to_vec(),
            });
            let x = batch_tensor(ds, rows, idx.len())?;
            let labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
            let run = || -> Result<(f64, Vec<(String, Tensor)>, Vec<_>)> {
                let tape = Tape::new();
                let vars = model.bind(&tape, true);
                let xv = tape.constant(x);
                let out = model.forward_tape(&tape, &vars, xv, true)?;
                let loss = cross_entropy_loss(&tape, out.logits, &labels)?;
                let value = tape.value(loss).item();
                let grads = tape.backward(loss)?;
                Ok((value, trainable_grads(&vars, grads), out.bn_stats))
            };
            let (value, grads, stats) = run().map_err(|e| diverged(e, epoch, step, &progress))?;
            progress.check(value, epoch, step)?;
            adam.step(&mut model.weights, &grads);
            model.update_running_stats(&stats);
            total += value * idx.len() as f64;
        }
        log.push(TrainLogRow {
            epoch: epoch + 1,
            loss: total / ds.len() as f64,
            id_val_accuracy: val_accuracy(model, val)?,
        });
    }
    Ok(log)
}

fn projection_head(model: &ModelArtifacts, dim: usize, seed_value: u64) -> WeightMap {
    let f = model.feature_dim();
    let mut head = WeightMap::new();
    for (name, o, i) in [("proj0", f, f), ("proj1", dim, f)] {
        let mut rng = seed::rng(seed::derive(seed_value, name));
        let bound = 1.0 / (i as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w: Vec<f64> = (0..o * i).map(|_| dist.sample(&mut rng)).collect();
        head.insert(format!("{name}.weight"), Arc::new(Tensor::new(vec![o, i], w).expect("shape")));
        head.insert(format!("{name}.bias"), Arc::new(Tensor::zeros(&[o])));
    }
    head
}

/// Contrastive phase: two augmented views per sample; every view is an
/// anchor and all other views of the batch are its candidates.
fn train_mpc(model: &mut ModelArtifacts, ds: &TimeSeriesDataset, cfg: &TrainConfig) -> Result<Vec<TrainLogRow>> {
    let mut rng = seed::rng(seed::derive(cfg.seed, "mpc-shuffle"));
    let mut aug_rng = seed::rng(seed::derive(cfg.seed, "mpc-augment"));
    let augmentation = cfg.view_augmentation();
    let mut head = projection_head(model, cfg.projection_dim, cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut head_adam = Adam::new(cfg.learning_rate);
    let mut progress = Progress { last_finite: None };
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let views: Vec<Vec<f64>> = (0..2)
                .flat_map(|_| idx.iter().map(|&i| ds.instance(i)))
                .map(|x| augmentation.apply(x, ds.dims(), &mut aug_rng))
                .collect();
            let labels: Vec<usize> = (0..2).flat_map(|_| idx.iter().map(|&i| ds.labels()[i])).collect();
            let x = batch_tensor(ds, views.into_iter(), 2 * idx.len())?;
            let matches = MatchMatrix::supervised(&labels);
            let run = || -> Result<(f64, Vec<(String, Tensor)>, Vec<(String, Tensor)>, Vec<_>)> {
                let tape = Tape::new();
                let vars = model.bind(&tape, true);
                let hvars: IndexMap<String, Var> = head
                    .iter()
                    .map(|(n, t)| (n.clone(), tape.param(Arc::clone(t))))
                    .collect();
                let xv = tape.constant(x);
                let out = model.forward_tape(&tape, &vars, xv, true)?;
                let z = tape.linear(out.prelogit, hvars["proj0.weight"], Some(hvars["proj0.bias"]))?;
                let z = tape.relu(z)?;
                let z = tape.linear(z, hvars["proj1.weight"], Some(hvars["proj1.bias"]))?;
                let z = l2_normalize(&tape, z)?;
                let loss = mpc_loss(&tape, z, z, &matches, cfg.temperature)?;
                let value = tape.value(loss).item();
                let mut grads = tape.backward(loss)?;
                let head_grads = hvars
                    .iter()
                    .filter_map(|(n, v)| grads.remove(*v).map(|g| (n.clone(), g)))
                    .collect();
                Ok((value, trainable_grads(&vars, grads), head_grads, out.bn_stats))
            };
            let (value, grads, head_grads, stats) = run().map_err(|e| diverged(e, epoch, step, &progress))?;
            progress.check(value, epoch, step)?;
            adam.step(&mut model.weights, &grads);
            head_adam.step(&mut head, &head_grads);
            model.update_running_stats(&stats);
            total += value * idx.len() as f64;
            count += idx.len();
        }
        log.push(TrainLogRow {
            epoch: epoch + 1,
            loss: total / count as f64,
            id_val_accuracy: None,
        });
    }
    Ok(log)
}

/// Fits the classification head with CE on frozen pre-logit features.
fn linear_probe(
    model: &mut ModelArtifacts,
    ds: &TimeSeriesDataset,
    val: Option<&TimeSeriesDataset>,
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogRow>> {
    if cfg.probe_epochs == 0 {
        return Ok(Vec::new());
    }
    let features = model.forward_batched(ds.values(), EVAL_CHUNK)?.prelogit;
    let f = features.shape()[1];
    let mut rng = seed::rng(seed::derive(cfg.seed, "probe-shuffle"));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut progress = Progress { last_finite: None };
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut log = Vec::with_capacity(cfg.probe_epochs);
    for epoch in 0..cfg.probe_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<f64> = idx.iter().flat_map(|&i| features.row(i).iter().copied()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
            let tape = Tape::new();
            let w = tape.param(Arc::clone(&model.weights["head.weight"]));
            let b = tape.param(Arc::clone(&model.weights["head.bias"]));
            let h = tape.constant(Tensor::new(vec![idx.len(), f], rows)?);
            let logits = tape.linear(h, w, Some(b))?;
            let loss = cross_entropy_loss(&tape, logits, &labels)?;
            let value = tape.value(loss).item();
            progress.check(value, epoch, step)?;
            let mut grads = tape.backward(loss)?;
            let g = vec![
                ("head.weight".to_string(), grads.remove(w).expect("head weight grad")),
                ("head.bias".to_string(), grads.remove(b).expect("head bias grad")),
            ];
            adam.step(&mut model.weights, &g);
            total += value * idx.len() as f64;
        }
        log.push(TrainLogRow {
            epoch: epoch + 1,
            loss: total / ds.len() as f64,
            id_val_accuracy: val_accuracy(model, val)?,
        });
    }
    Ok(log)
}

/// Names of the weights updated by training (buffers excluded).
pub fn trainable_names(model: &ModelArtifacts) -> Vec<String> {
    model.weights.keys().filter(|n| !is_buffer(n)).cloned().collect()
}
