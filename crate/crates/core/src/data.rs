//! Datasets: `.ts` parsing and serialization, synthetic generation, the
//! ID/OOD class split, the balanced evaluation mixture and channel
//! normalization.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("no @data section found")]
    MissingHeader,
    #[error("unequal-length series are not supported ({0})")]
    UnequalLength(String),
    #[error("line {line}: expected {expected} dimensions, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: class label {label:?} was not declared on @classLabel")]
    UnknownClass { line: usize, label: String },
    #[error("line {line}: malformed number {token:?}")]
    MalformedNumber { line: usize, token: String },
    #[error("unsupported .ts feature: {0}")]
    Unsupported(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{0} is empty")]
    EmptySide(&'static str),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// Equal-length multivariate series with class labels. Values are stored
/// instance-major as `n × dims × length`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub split: SplitTag,
    pub class_names: Vec<String>,
    dims: usize,
    length: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        split: SplitTag,
        class_names: Vec<String>,
        dims: usize,
        length: usize,
        values: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dims == 0 || length == 0 {
            return Err(DataError::Invalid("dims and length must be positive".into()));
        }
        if values.len() != labels.len() * dims * length {
            return Err(DataError::Invalid(format!(
                "{} values for {} instances of {dims}×{length}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DataError::Invalid(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            split,
            class_names,
            dims,
            length,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values of instance `i`, laid out `dims × length`.
    pub fn instance(&self, i: usize) -> &[f64] {
        let w = self.dims * self.length;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dims * self.length);
        for &i in indices {
            values.extend_from_slice(self.instance(i));
        }
        Self {
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            name: self.name.clone(),
            split: self.split,
            class_names: self.class_names.clone(),
            dims: self.dims,
            length: self.length,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Serializes to the `.ts` grammar accepted by [`parse_ts`].
    pub fn to_ts_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "@problemName {}", self.name);
        let _ = writeln!(s, "@timeStamps false");
        let _ = writeln!(s, "@missing false");
        let _ = writeln!(s, "@univariate {}", self.dims == 1);
        let _ = writeln!(s, "@dimensions {}", self.dims);
        let _ = writeln!(s, "@equalLength true");
        let _ = writeln!(s, "@seriesLength {}", self.length);
        let _ = writeln!(s, "@classLabel true {}", self.class_names.join(" "));
        let _ = writeln!(s, "@data");
        for i in 0..self.len() {
            for channel in self.instance(i).chunks(self.length) {
                let row: Vec<String> = channel.iter().map(|v| v.to_string()).collect();
                s.push_str(&row.join(","));
                s.push(':');
            }
            s.push_str(&self.class_names[self.labels[i]]);
            s.push('\n');
        }
        s
    }
}

fn parse_bool(line: usize, token: Option<&str>) -> Result<bool> {
    match token.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        other => Err(DataError::MalformedNumber {
            line,
            token: other.unwrap_or("").to_string(),
        }),
    }
}

fn parse_usize(line: usize, token: Option<&str>) -> Result<usize> {
    let t = token.unwrap_or("");
    t.parse().map_err(|_| DataError::MalformedNumber {
        line,
        token: t.to_string(),
    })
}

/// Parses a UEA/UCR `.ts` file with equal-length series.
///
/// The class label is the final `:`-separated field of each data line and
/// class indices follow the `@classLabel` declaration order.
pub fn parse_ts(text: &str, split: SplitTag) -> Result<TimeSeriesDataset> {
    let mut name = String::from("unnamed");
    let mut dims: Option<usize> = None;
    let mut length: Option<usize> = None;
    let mut class_names: Option<Vec<String>> = None;
    let mut in_data = false;
    let mut values = Vec::new();
    let mut labels = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(DataError::MissingHeader);
            }
            let mut tokens = line.split_whitespace();
            let directive = tokens.next().unwrap_or("").to_ascii_lowercase();
            match directive.as_str() {
                "@problemname" => name = tokens.collect::<Vec<_>>().join(" "),
                "@timestamps" => {
                    if parse_bool(line_no, tokens.next())? {
                        return Err(DataError::Unsupported("timestamped series".into()));
                    }
                }
                "@missing" => {
                    if parse_bool(line_no, tokens.next())? {
                        return Err(DataError::Unsupported("missing values".into()));
                    }
                }
                "@univariate" => {
                    parse_bool(line_no, tokens.next())?;
                }
                "@dimensions" => dims = Some(parse_usize(line_no, tokens.next())?),
                "@equallength" => {
                    if !parse_bool(line_no, tokens.next())? {
                        return Err(DataError::UnequalLength("@equalLength false".into()));
                    }
                }
                "@serieslength" => length = Some(parse_usize(line_no, tokens.next())?),
                "@classlabel" => {
                    if !parse_bool(line_no, tokens.next())? {
                        return Err(DataError::Unsupported("unlabelled data".into()));
                    }
                    class_names = Some(tokens.map(String::from).collect());
                }
                "@data" => in_data = true,
                _ => {}
            }
            continue;
        }

        let classes = class_names
            .as_ref()
            .ok_or_else(|| DataError::Unsupported("missing @classLabel declaration".into()))?;
        let fields: Vec<&str> = line.split(':').collect();
        let (label, blocks) = fields.split_last().expect("split yields at least one field");
        let d = *dims.get_or_insert(blocks.len());
        if blocks.len() != d {
            return Err(DataError::DimensionMismatch {
                line: line_no,
                expected: d,
                found: blocks.len(),
            });
        }
        for block in blocks {
            let start = values.len();
            for token in block.split(',') {
                let token = token.trim();
                let v: f64 = token.parse().map_err(|_| DataError::MalformedNumber {
                    line: line_no,
                    token: token.to_string(),
                })?;
                values.push(v);
            }
            let n = values.len() - start;
            let l = *length.get_or_insert(n);
            if n != l {
                return Err(DataError::UnequalLength(format!(
                    "line {line_no}: series of length {n}, expected {l}"
                )));
            }
        }
        let label = label.trim();
        let class = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| DataError::UnknownClass {
                line: line_no,
                label: label.to_string(),
            })?;
        labels.push(class);
    }

    if !in_data {
        return Err(DataError::MissingHeader);
    }
    let class_names = class_names.ok_or_else(|| DataError::Unsupported("missing @classLabel".into()))?;
    let (Some(dims), Some(length)) = (dims, length) else {
        return Err(DataError::Invalid("no instances and no declared shape".into()));
    };
    TimeSeriesDataset::new(name, split, class_names, dims, length, values, labels)
}

pub fn parse_ts_bytes(bytes: &[u8], split: SplitTag) -> Result<TimeSeriesDataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| DataError::Invalid(e.to_string()))?;
    parse_ts(text, split)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub n_per_class: usize,
    pub dims: usize,
    pub length: usize,
    pub seed: u64,
}

/// Sinusoid classes: channel `j` of a class-`c` instance is
/// `sin(2π·(c+1)·t/L + φ) + ε` with a uniform random phase per channel and
/// `ε ~ N(0, 0.1²)`.
pub fn generate_synthetic(cfg: &SyntheticConfig, split: SplitTag) -> TimeSeriesDataset {
    let mut rng = seed::rng(cfg.seed);
    let noise = Normal::new(0.0, 0.1).expect("valid sigma");
    let n = cfg.classes * cfg.n_per_class;
    let mut values = Vec::with_capacity(n * cfg.dims * cfg.length);
    let mut labels = Vec::with_capacity(n);
    for c in 0..cfg.classes {
        let freq = (c + 1) as f64;
        for _ in 0..cfg.n_per_class {
            for _ in 0..cfg.dims {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                for t in 0..cfg.length {
                    let angle = std::f64::consts::TAU * freq * t as f64 / cfg.length as f64 + phase;
                    values.push(angle.sin() + noise.sample(&mut rng));
                }
            }
            labels.push(c);
        }
    }
    let class_names = (0..cfg.classes).map(|c| format!("c{c}")).collect();
    TimeSeriesDataset::new("synthetic", split, class_names, cfg.dims, cfg.length, values, labels)
        .expect("synthetic dataset is well formed")
}

/// Which classes are in-distribution and which are held out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub id_classes: Vec<usize>,
    pub ood_classes: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct IdOodSplit {
    /// ID-class training instances; `class_names` holds the ID classes only.
    pub id_train: TimeSeriesDataset,
    pub id_test: TimeSeriesDataset,
    /// OOD-class test instances with their original labels.
    pub ood_test: TimeSeriesDataset,
    pub spec: SplitSpec,
}

/// Declaration-order split: the first `⌈C/2⌉` classes are in-distribution,
/// the rest out-of-distribution. OOD training instances are dropped.
pub fn split_id_ood(train: &TimeSeriesDataset, test: &TimeSeriesDataset, seed: u64) -> Result<IdOodSplit> {
    let c = train.n_classes();
    if c < 2 {
        return Err(DataError::Invalid(format!("need at least 2 classes, got {c}")));
    }
    if test.class_names != train.class_names {
        return Err(DataError::Invalid("train and test declare different classes".into()));
    }
    if test.dims() != train.dims() || test.length() != train.length() {
        return Err(DataError::Invalid("train and test shapes differ".into()));
    }
    let n_id = c.div_ceil(2);
    let pick = |ds: &TimeSeriesDataset, id: bool| -> Vec<usize> {
        (0..ds.len()).filter(|&i| (ds.labels[i] < n_id) == id).collect()
    };
    let mut id_train = train.subset(&pick(train, true));
    let mut id_test = test.subset(&pick(test, true));
    let ood_test = test.subset(&pick(test, false));
    id_train.class_names.truncate(n_id);
    id_test.class_names.truncate(n_id);
    for (ds, what) in [(&id_train, "id_train"), (&id_test, "id_test"), (&ood_test, "ood_test")] {
        if ds.is_empty() {
            return Err(DataError::EmptySide(what));
        }
    }
    Ok(IdOodSplit {
        id_train,
        id_test,
        ood_test,
        spec: SplitSpec {
            id_classes: (0..n_id).collect(),
            ood_classes: (n_id..c).collect(),
            seed,
        },
    })
}

/// Provenance of one mixture sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SampleOrigin {
    pub is_ood: bool,
    /// Index in `id_test` or `ood_test`.
    pub index: usize,
}

/// Balanced, shuffled blend of ID and OOD test instances.
#[derive(Clone, Debug)]
pub struct EvalMixture {
    pub dims: usize,
    pub length: usize,
    pub values: Vec<f64>,
    pub origins: Vec<SampleOrigin>,
}

impl EvalMixture {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        let w = self.dims * self.length;
        &self.values[i * w..(i + 1) * w]
    }

    /// Binary truth labels, OOD = 1.
    pub fn labels(&self) -> Vec<u8> {
        self.origins.iter().map(|o| o.is_ood as u8).collect()
    }
}

/// Draws `min(|id|, |ood|)` instances without replacement from each side,
/// then shuffles the concatenation.
pub fn make_eval_mixture(id_test: &TimeSeriesDataset, ood_test: &TimeSeriesDataset, seed: u64) -> Result<EvalMixture> {
    if id_test.is_empty() {
        return Err(DataError::EmptySide("id_test"));
    }
    if ood_test.is_empty() {
        return Err(DataError::EmptySide("ood_test"));
    }
    let n = id_test.len().min(ood_test.len());
    let mut rng = seed::rng(seed);
    let mut draw = |len: usize| {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.sort_unstable();
        idx
    };
    let id_idx = draw(id_test.len());
    let ood_idx = draw(ood_test.len());
    let mut origins: Vec<SampleOrigin> = id_idx
        .iter()
        .map(|&index| SampleOrigin { is_ood: false, index })
        .chain(ood_idx.iter().map(|&index| SampleOrigin { is_ood: true, index }))
        .collect();
    origins.shuffle(&mut rng);
    let mut values = Vec::with_capacity(origins.len() * id_test.dims() * id_test.length());
    for o in &origins {
        let src = if o.is_ood { ood_test } else { id_test };
        values.extend_from_slice(src.instance(o.index));
    }
    Ok(EvalMixture {
        dims: id_test.dims(),
        length: id_test.length(),
        values,
        origins,
    })
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl NormStats {
    /// Mean and population standard deviation of each channel over all
    /// instances and timesteps of `source`, with the deviation floored at
    /// [`STD_FLOOR`].
    pub fn fit(source: &TimeSeriesDataset) -> Self {
        let (d, l) = (source.dims(), source.length());
        let count = (source.len() * l) as f64;
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for i in 0..source.len() {
            for (j, ch) in source.instance(i).chunks(l).enumerate() {
                mean[j] += ch.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for i in 0..source.len() {
            for (j, ch) in source.instance(i).chunks(l).enumerate() {
                std[j] += ch.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>();
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / count).sqrt().max(STD_FLOOR));
        Self { mean, std }
    }

    /// Normalizes a flat `n × dims × length` buffer in place.
    pub fn apply_values(&self, values: &mut [f64], length: usize) {
        let d = self.mean.len();
        for (k, ch) in values.chunks_mut(length).enumerate() {
            let j = k % d;
            ch.iter_mut().for_each(|v| *v = (*v - self.mean[j]) / self.std[j]);
        }
    }

    pub fn apply(&self, ds: &TimeSeriesDataset) -> TimeSeriesDataset {
        let mut out = ds.clone();
        self.apply_values(&mut out.values, ds.length);
        out
    }
}

/// Fits statistics on `source` and applies them to `source` and every target.
pub fn channel_normalize(
    source: &TimeSeriesDataset,
    targets: &[&TimeSeriesDataset],
) -> (TimeSeriesDataset, Vec<TimeSeriesDataset>, NormStats) {
    let stats = NormStats::fit(source);
    let normalized = stats.apply(source);
    let targets = targets.iter().map(|t| stats.apply(t)).collect();
    (normalized, targets, stats)
}
