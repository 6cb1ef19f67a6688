//! Pipeline configuration: one JSON file fully determines a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tsood_core::augment::{Augmentation, AugmentationConfig};
use tsood_core::bench::BenchConfig;
use tsood_core::model::{Arch, ModelConfig};
use tsood_core::scorers::{Method, ScorerParams};
use tsood_core::train::{LossKind, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Sinusoid classes with frequency `c + 1`.
    Synthetic {
        #[serde(default = "synthetic_name")]
        name: String,
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        dims: usize,
        length: usize,
    },
    /// A pair of `.ts` files.
    Ts { train: PathBuf, test: PathBuf },
    /// `<dir>/<name>/<name>_TRAIN.ts` or `<dir>/<name>_TRAIN.ts`, same for TEST.
    Uea { dir: PathBuf, name: String },
}

fn synthetic_name() -> String {
    "synthetic".into()
}

impl DatasetSource {
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Synthetic { name, .. } => name.clone(),
            DatasetSource::Ts { train, .. } => train
                .file_stem()
                .map(|s| s.to_string_lossy().trim_end_matches("_TRAIN").to_string())
                .unwrap_or_else(|| "ts".into()),
            DatasetSource::Uea { name, .. } => name.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Arch,
    pub width: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: Arch::ResNet1D,
            width: 64,
        }
    }
}

/// Training options. The training seed is derived from the top-level seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub augmentation: Option<AugmentationConfig>,
    pub augment_ce: bool,
    pub probe_epochs: usize,
    pub projection_dim: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            loss: d.loss,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            temperature: d.temperature,
            augmentation: None,
            augment_ce: d.augment_ce,
            probe_epochs: d.probe_epochs,
            projection_dim: d.projection_dim,
        }
    }
}

impl TrainSection {
    pub fn augmentation(&self) -> Result<Option<Augmentation>> {
        self.augmentation
            .as_ref()
            .map(|a| a.resolve().map_err(|e| CliError::Config(format!("train.augmentation: {e}"))))
            .transpose()
    }

    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            loss: self.loss,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            temperature: self.temperature,
            augmentation: self.augmentation()?,
            augment_ce: self.augment_ce,
            probe_epochs: self.probe_epochs,
            projection_dim: self.projection_dim,
            seed,
        })
    }
}

/// Lists expanded as a cartesian product by `matrix`. Empty lists fall back
/// to the single value of the base config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSection {
    pub datasets: Vec<DatasetSource>,
    pub archs: Vec<Arch>,
    pub losses: Vec<LossKind>,
    /// `null` entries train without augmentation.
    pub augmentations: Vec<Option<AugmentationConfig>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub scorer_params: ScorerParams,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical JSON (sorted keys, defaults filled in) without `output_dir`.
    pub fn canonical(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(&self.canonical()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn model_config(&self, in_channels: usize, seq_len: usize, n_classes: usize, seed: u64) -> ModelConfig {
        ModelConfig::new(self.model.arch, in_channels, seq_len, n_classes, seed).with_width(self.model.width)
    }

    /// Checks everything that can be checked without reading data.
    /// Relative paths resolve against `base_dir`.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        let cfg = |m: String| Err(CliError::Config(m));
        validate_dataset(&self.dataset, base_dir, "dataset")?;
        if let Err(e) = self.model_config(1, 1, 2, 0).validate() {
            return cfg(format!("model: {e}"));
        }
        if let Err(e) = self.train.to_train_config(0)?.validate() {
            return cfg(format!("train: {e}"));
        }
        if self.methods.is_empty() {
            return cfg("methods: at least one scorer is required".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return cfg(format!("methods: {m} is listed twice"));
            }
        }
        if let Err(e) = self.scorer_params.validate() {
            return cfg(format!("scorer_params: {e}"));
        }
        if self.bench.warmup == 0 || self.bench.repeats == 0 {
            return cfg("bench: warmup and repeats must be at least 1".into());
        }
        if let Some(m) = &self.matrix {
            for (i, d) in m.datasets.iter().enumerate() {
                validate_dataset(d, base_dir, &format!("matrix.datasets[{i}]"))?;
            }
            for (i, a) in m.augmentations.iter().enumerate() {
                if let Some(a) = a {
                    if let Err(e) = a.resolve() {
                        return cfg(format!("matrix.augmentations[{i}]: {e}"));
                    }
                }
            }
            for arch in &m.archs {
                let probe = ModelConfig::new(*arch, 1, 1, 2, 0).with_width(self.model.width);
                if let Err(e) = probe.validate() {
                    return cfg(format!("matrix.archs: {e}"));
                }
            }
            let mut labels: Vec<String> = m.datasets.iter().map(DatasetSource::label).collect();
            labels.sort();
            if labels.windows(2).any(|w| w[0] == w[1]) {
                return cfg("matrix.datasets: dataset names must be distinct".into());
            }
        }
        Ok(())
    }
}

pub fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn validate_dataset(d: &DatasetSource, base_dir: &Path, key: &str) -> Result<()> {
    let missing = |field: &str, p: &Path| {
        Err(CliError::Config(format!("{key}.{field}: {} does not exist", p.display())))
    };
    match d {
        DatasetSource::Synthetic {
            classes,
            train_per_class,
            test_per_class,
            dims,
            length,
            ..
        } => {
            if *classes < 2 || *train_per_class == 0 || *test_per_class == 0 || *dims == 0 || *length == 0 {
                return Err(CliError::Config(format!(
                    "{key}: synthetic data needs classes ≥ 2 and positive counts and shape"
                )));
            }
        }
        DatasetSource::Ts { train, test } => {
            for (field, p) in [("train", train), ("test", test)] {
                let p = resolve(base_dir, p);
                if !p.is_file() {
                    return missing(field, &p);
                }
            }
        }
        DatasetSource::Uea { dir, .. } => {
            let p = resolve(base_dir, dir);
            if !p.is_dir() {
                return missing("dir", &p);
            }
        }
    }
    Ok(())
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let config = PipelineConfig::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn from_config(config: PipelineConfig, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            base_dir: base_dir.into(),
        }
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.config.output_dir.as_ref().map(|p| resolve(&self.base_dir, p))
    }
}
