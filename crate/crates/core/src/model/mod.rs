//! Backbones behind a uniform interface: logits, pre-logit features, input
//! gradients and last-layer weights.

mod checkpoint;
mod gradcheck;
mod lstm;
mod resnet;
mod tst;

use std::sync::Arc;

use indexmap::IndexMap;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tsood_tensor::{BatchNormMode, BatchStats, Tape, Tensor, TensorError, Var};

use crate::data::NormStats;
use crate::seed;

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, CheckpointManifest, WeightEntry, CHECKPOINT_SCHEMA_VERSION,
    MANIFEST_FILE, WEIGHTS_FILE,
};
pub use gradcheck::{backbone_gradient_check, BackboneCheck};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;
pub const TST_HEADS: usize = 4;
pub const TST_LAYERS: usize = 3;
pub const RESNET_BLOCKS: usize = 3;
pub const RESNET_KERNELS: [usize; 3] = [7, 5, 3];
pub const LSTM_LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input shape {found:?} does not match model input {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("weight map does not match the {arch} schema: {reason}")]
    Schema { arch: Arch, reason: String },
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "resnet1d", alias = "ResNet1D", alias = "resnet")]
    ResNet1D,
    #[serde(rename = "tst", alias = "TST")]
    Tst,
    #[serde(rename = "lstm", alias = "LSTM")]
    Lstm,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::ResNet1D, Arch::Tst, Arch::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Arch::ResNet1D => "resnet1d",
            Arch::Tst => "tst",
            Arch::Lstm => "lstm",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "resnet1d" | "resnet" => Ok(Arch::ResNet1D),
            "tst" => Ok(Arch::Tst),
            "lstm" => Ok(Arch::Lstm),
            _ => Err(ModelError::InvalidConfig(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub in_channels: usize,
    pub seq_len: usize,
    pub n_classes: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    pub seed: u64,
}

fn default_width() -> usize {
    64
}

impl ModelConfig {
    pub fn new(arch: Arch, in_channels: usize, seq_len: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            arch,
            in_channels,
            seq_len,
            n_classes,
            width: default_width(),
            seed,
        }
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.in_channels == 0 || self.seq_len == 0 || self.width == 0 {
            return bad("in_channels, seq_len and width must be positive".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.arch == Arch::Tst && self.width % TST_HEADS != 0 {
            return bad(format!("tst width {} is not divisible by {TST_HEADS} heads", self.width));
        }
        Ok(())
    }
}

/// Ordered weight names and shapes of an architecture.
pub fn weight_schema(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    match config.arch {
        Arch::ResNet1D => resnet::schema(config),
        Arch::Tst => tst::schema(config),
        Arch::Lstm => lstm::schema(config),
    }
}

/// Batch-norm running statistics live in the weight map but are not
/// trained.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub loss: String,
    pub epochs: usize,
    pub steps: usize,
    pub final_train_accuracy: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
}

pub type WeightMap = IndexMap<String, Arc<Tensor>>;

/// A backbone: configuration, named weights, the input normalization it was
/// trained with, and training metadata.
#[derive(Clone, Debug)]
pub struct ModelArtifacts {
    pub config: ModelConfig,
    pub weights: WeightMap,
    pub norm: NormStats,
    pub meta: TrainingMeta,
}

/// Logits `[b, C]` and pre-logit features `[b, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    pub logits: Tensor,
    pub prelogit: Tensor,
}

/// Forward pass recorded on a tape.
pub struct TapeForward {
    pub logits: Var,
    pub prelogit: Var,
    /// Training-mode batch statistics keyed by batch-norm prefix.
    pub bn_stats: Vec<(String, BatchStats)>,
    /// Named intermediate values (attention maps, recurrent state).
    pub taps: Vec<(String, Var)>,
}

fn round_f32(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}

fn init_weight(config: &ModelConfig, name: &str, shape: &[usize]) -> Tensor {
    let mut rng = seed::rng(seed::derive(config.seed, name));
    let n: usize = shape.iter().product();
    let leaf = name.rsplit('.').next().unwrap_or(name);
    let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
    let data: Vec<f64> = match leaf {
        "gamma" | "running_var" => vec![1.0; n],
        "beta" | "bias" | "running_mean" => vec![0.0; n],
        "pos_embedding" => {
            let d = Normal::new(0.0, 0.02).unwrap();
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        _ if shape.len() == 3 => {
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        _ => {
            let fan = if name.starts_with("lstm") { shape[0] / 4 } else { fan_in };
            let bound = 1.0 / (fan as f64).sqrt();
            let d = Uniform::new_inclusive(-bound, bound).unwrap();
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
    };
    let mut t = Tensor::new(shape.to_vec(), data).expect("schema shapes are positive");
    round_f32(&mut t);
    t
}

pub fn build_resnet1d(config: &ModelConfig) -> Result<ModelArtifacts> {
    ModelArtifacts::build(&ModelConfig { arch: Arch::ResNet1D, ..config.clone() })
}

pub fn build_tst(config: &ModelConfig) -> Result<ModelArtifacts> {
    ModelArtifacts::build(&ModelConfig { arch: Arch::Tst, ..config.clone() })
}

pub fn build_lstm(config: &ModelConfig) -> Result<ModelArtifacts> {
    ModelArtifacts::build(&ModelConfig { arch: Arch::Lstm, ..config.clone() })
}

impl ModelArtifacts {
    /// Seeded initialization. Every weight draws from its own stream derived
    /// from the seed and the weight name. Identity normalization.
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let weights = weight_schema(config)
            .into_iter()
            .map(|(name, shape)| {
                let t = init_weight(config, &name, &shape);
                (name, Arc::new(t))
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            weights,
            norm: NormStats {
                mean: vec![0.0; config.in_channels],
                std: vec![1.0; config.in_channels],
            },
            meta: TrainingMeta::default(),
        })
    }

    /// Checks names, order, shapes and finiteness against the schema.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let schema = weight_schema(&self.config);
        let err = |reason: String| ModelError::Schema {
            arch: self.config.arch,
            reason,
        };
        if schema.len() != self.weights.len() {
            return Err(err(format!("{} weights, expected {}", self.weights.len(), schema.len())));
        }
        for ((name, shape), (have_name, t)) in schema.iter().zip(&self.weights) {
            if name != have_name || shape.as_slice() != t.shape() {
                return Err(err(format!("expected {name} {shape:?}, found {have_name} {:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(err(format!("{name} is not finite")));
            }
        }
        if self.norm.mean.len() != self.config.in_channels || self.norm.std.len() != self.config.in_channels {
            return Err(err("normalization stats do not match in_channels".into()));
        }
        Ok(())
    }

    pub fn weight(&self, name: &str) -> &Tensor {
        self.weights
            .get(name)
            .unwrap_or_else(|| panic!("weight {name} missing from {} model", self.config.arch))
    }

    /// Number of trainable scalars (batch-norm buffers excluded).
    pub fn parameter_count(&self) -> usize {
        self.weights
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Final linear layer `(W [C, F], b [C])`.
    pub fn head(&self) -> (&Tensor, &Tensor) {
        (self.weight("head.weight"), self.weight("head.bias"))
    }

    pub fn feature_dim(&self) -> usize {
        self.head().0.shape()[1]
    }

    pub fn input_shape(&self) -> [usize; 2] {
        [self.config.in_channels, self.config.seq_len]
    }

    /// Records every non-buffer weight on `tape`, as trainable parameters or
    /// as constants.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> IndexMap<String, Var> {
        self.weights
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(n, t)| (n.clone(), tape.leaf(Arc::clone(t), trainable)))
            .collect()
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        match shape {
            [b, d, l] if *b > 0 && *d == self.config.in_channels && *l == self.config.seq_len => Ok(()),
            _ => Err(ModelError::ShapeMismatch {
                expected: vec![0, self.config.in_channels, self.config.seq_len],
                found: shape.to_vec(),
            }),
        }
    }

    /// Forward pass of `x: [b, d, L]` on `tape` with weights bound by
    /// [`bind`](Self::bind). Training mode uses batch statistics in batch
    /// norm and reports them; evaluation mode uses the running statistics.
    pub fn forward_tape(&self, tape: &Tape, vars: &IndexMap<String, Var>, x: Var, train: bool) -> Result<TapeForward> {
        self.check_input(&tape.shape(x))?;
        let mut net = Net {
            tape,
            vars,
            weights: &self.weights,
            train,
            bn_stats: Vec::new(),
            taps: Vec::new(),
        };
        let prelogit = match self.config.arch {
            Arch::ResNet1D => resnet::features(&mut net, &self.config, x)?,
            Arch::Tst => tst::features(&mut net, &self.config, x)?,
            Arch::Lstm => lstm::features(&mut net, &self.config, x)?,
        };
        let logits = net.linear("head", prelogit)?;
        Ok(TapeForward {
            logits,
            prelogit,
            bn_stats: net.bn_stats,
            taps: net.taps,
        })
    }

    /// Evaluation-mode forward pass on already-normalized input.
    pub fn forward(&self, x: &Tensor) -> Result<ForwardOutputs> {
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward_tape(&tape, &vars, xv, false)?;
        Ok(ForwardOutputs {
            logits: (*tape.value(out.logits)).clone(),
            prelogit: (*tape.value(out.prelogit)).clone(),
        })
    }

    /// Evaluation-mode forward pass that also returns named intermediates.
    pub fn forward_taps(&self, x: &Tensor) -> Result<(ForwardOutputs, Vec<(String, Tensor)>)> {
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward_tape(&tape, &vars, xv, false)?;
        let taps = out.taps.iter().map(|(n, v)| (n.clone(), (*tape.value(*v)).clone())).collect();
        Ok((
            ForwardOutputs {
                logits: (*tape.value(out.logits)).clone(),
                prelogit: (*tape.value(out.prelogit)).clone(),
            },
            taps,
        ))
    }

    /// Forward in chunks of at most `chunk` instances, concatenating rows.
    pub fn forward_batched(&self, values: &[f64], chunk: usize) -> Result<ForwardOutputs> {
        let w = self.config.in_channels * self.config.seq_len;
        if values.is_empty() || values.len() % w != 0 {
            return Err(ModelError::ShapeMismatch {
                expected: vec![0, self.config.in_channels, self.config.seq_len],
                found: vec![values.len()],
            });
        }
        let n = values.len() / w;
        let (mut logits, mut prelogit) = (Vec::new(), Vec::new());
        for part in values.chunks(chunk.max(1) * w) {
            let b = part.len() / w;
            let x = Tensor::new(vec![b, self.config.in_channels, self.config.seq_len], part.to_vec())?;
            let out = self.forward(&x)?;
            logits.extend_from_slice(out.logits.data());
            prelogit.extend_from_slice(out.prelogit.data());
        }
        let f = self.feature_dim();
        Ok(ForwardOutputs {
            logits: Tensor::new(vec![n, self.config.n_classes], logits)?,
            prelogit: Tensor::new(vec![n, f], prelogit)?,
        })
    }

    /// `∂objective/∂x` in evaluation mode, where `objective` maps the logits
    /// var to a scalar var.
    pub fn input_gradient<F>(&self, x: &Tensor, objective: F) -> Result<Tensor>
    where
        F: FnOnce(&Tape, Var) -> tsood_tensor::Result<Var>,
    {
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let xv = tape.param(x.clone());
        let out = self.forward_tape(&tape, &vars, xv, false)?;
        let obj = objective(&tape, out.logits)?;
        let mut grads = tape.backward(obj)?;
        Ok(grads.remove(xv).expect("input requires grad"))
    }

    /// Folds training-mode batch statistics into the running buffers.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats)]) {
        for (prefix, s) in stats {
            for (suffix, batch) in [("running_mean", &s.mean), ("running_var", &s.var)] {
                let name = format!("{prefix}.{suffix}");
                let t = Arc::make_mut(self.weights.get_mut(&name).expect("batch-norm buffer"));
                for (r, b) in t.data_mut().iter_mut().zip(batch) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
            }
        }
    }

    /// Rounds every weight to the nearest 32-bit float, the checkpoint
    /// storage precision.
    pub fn round_to_f32(&mut self) {
        for t in self.weights.values_mut() {
            round_f32(Arc::make_mut(t));
        }
    }
}

/// Shared layer helpers for the architecture modules.
pub(crate) struct Net<'a> {
    pub tape: &'a Tape,
    vars: &'a IndexMap<String, Var>,
    weights: &'a WeightMap,
    train: bool,
    bn_stats: Vec<(String, BatchStats)>,
    taps: Vec<(String, Var)>,
}

impl Net<'_> {
    pub fn p(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("weight {name} was not bound"))
    }

    pub fn tap(&mut self, name: impl Into<String>, v: Var) {
        self.taps.push((name.into(), v));
    }

    /// `x·Wᵀ + b` over the last axis of a tensor of any rank ≥ 2.
    pub fn linear(&self, prefix: &str, x: Var) -> tsood_tensor::Result<Var> {
        let t = self.tape;
        let w = self.p(&format!("{prefix}.weight"));
        let b = self.p(&format!("{prefix}.bias"));
        let shape = t.shape(x);
        if shape.len() == 2 {
            return t.linear(x, w, Some(b));
        }
        let inner = *shape.last().unwrap();
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = t.reshape(x, &[rows, inner])?;
        let y = t.linear(flat, w, Some(b))?;
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = t.shape(w)[0];
        t.reshape(y, &out_shape)
    }

    pub fn batch_norm(&mut self, prefix: &str, x: Var) -> tsood_tensor::Result<Var> {
        let gamma = self.p(&format!("{prefix}.gamma"));
        let beta = self.p(&format!("{prefix}.beta"));
        if self.train {
            let (y, stats) = self.tape.batch_norm(x, gamma, beta, BatchNormMode::Train, BN_EPS)?;
            self.bn_stats.push((prefix.to_string(), stats.expect("training mode reports stats")));
            Ok(y)
        } else {
            let mean = &self.weights[&format!("{prefix}.running_mean")];
            let var = &self.weights[&format!("{prefix}.running_var")];
            let mode = BatchNormMode::Eval {
                mean: mean.data(),
                var: var.data(),
            };
            Ok(self.tape.batch_norm(x, gamma, beta, mode, BN_EPS)?.0)
        }
    }

    pub fn layer_norm(&self, prefix: &str, x: Var) -> tsood_tensor::Result<Var> {
        let gamma = self.p(&format!("{prefix}.gamma"));
        let beta = self.p(&format!("{prefix}.beta"));
        self.tape.layer_norm(x, gamma, beta, LN_EPS)
    }
}
