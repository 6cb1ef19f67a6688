//! The run pipeline: load → split → normalize → train → fit scorers →
//! score the evaluation mixture → metrics.
//!
//! OOD test data is held in a [`SealedOod`] that can only be opened with a
//! [`FittedScorers`] value, and those only come out of [`fit_scorers`], so
//! nothing downstream of the split can look at OOD samples before every
//! scorer is fitted.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use tsood_core::data::{
    make_eval_mixture, parse_ts_bytes, split_id_ood, EvalMixture, NormStats, SplitTag, SyntheticConfig,
    TimeSeriesDataset,
};
use tsood_core::metrics::{aupr, auroc};
use tsood_core::model::{ModelArtifacts, ModelConfig};
use tsood_core::scorers::{fit_with_features, score_instances, BatchScores, FittedScorer, IdFeatures, ScorerSpec};
use tsood_core::seed::derive;
use tsood_core::train::{evaluate_id_accuracy, train, TrainLogRow};

use crate::config::{resolve, DatasetSource, PipelineConfig};
use crate::error::{CliError, Result};
use crate::output::{EvalReport, MethodResult, SplitReport, RESULTS_SCHEMA_VERSION};

pub fn read_ts(path: &Path, split: SplitTag) -> Result<TimeSeriesDataset> {
    let bytes = std::fs::read(path).map_err(|e| CliError::run(format!("reading {}", path.display()), e))?;
    parse_ts_bytes(&bytes, split).map_err(|e| CliError::run(format!("parsing {}", path.display()), e))
}

fn uea_path(dir: &Path, name: &str, split: &str) -> PathBuf {
    let nested = dir.join(name).join(format!("{name}_{split}.ts"));
    if nested.is_file() {
        nested
    } else {
        dir.join(format!("{name}_{split}.ts"))
    }
}

/// Train and test sets of a source. Synthetic data is drawn from streams
/// derived from `seed`.
pub fn load_dataset(source: &DatasetSource, base_dir: &Path, seed: u64) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let (mut train, mut test) = match source {
        DatasetSource::Synthetic {
            classes,
            train_per_class,
            test_per_class,
            dims,
            length,
            ..
        } => {
            let cfg = |n, tag| SyntheticConfig {
                classes: *classes,
                n_per_class: n,
                dims: *dims,
                length: *length,
                seed: derive(seed, tag),
            };
            (
                tsood_core::data::generate_synthetic(&cfg(*train_per_class, "data.train"), SplitTag::Train),
                tsood_core::data::generate_synthetic(&cfg(*test_per_class, "data.test"), SplitTag::Test),
            )
        }
        DatasetSource::Ts { train, test } => (
            read_ts(&resolve(base_dir, train), SplitTag::Train)?,
            read_ts(&resolve(base_dir, test), SplitTag::Test)?,
        ),
        DatasetSource::Uea { dir, name } => {
            let dir = resolve(base_dir, dir);
            (
                read_ts(&uea_path(&dir, name, "TRAIN"), SplitTag::Train)?,
                read_ts(&uea_path(&dir, name, "TEST"), SplitTag::Test)?,
            )
        }
    };
    let label = source.label();
    train.name = label.clone();
    test.name = label;
    Ok((train, test))
}

/// OOD test instances that stay out of reach until scorers are fitted.
pub struct SealedOod {
    raw: TimeSeriesDataset,
    norm: NormStats,
}

impl SealedOod {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Normalized OOD test set.
    pub fn open(self, _fitted: &FittedScorers) -> TimeSeriesDataset {
        self.norm.apply(&self.raw)
    }
}

/// Scorers fitted on ID training data. Only [`fit_scorers`] builds one.
pub struct FittedScorers {
    scorers: Vec<FittedScorer>,
}

impl FittedScorers {
    pub fn scorers(&self) -> &[FittedScorer] {
        &self.scorers
    }
}

/// Normalized ID splits plus the sealed OOD side.
pub struct Prepared {
    pub id_train: TimeSeriesDataset,
    pub id_test: TimeSeriesDataset,
    pub ood: SealedOod,
    pub id_class_names: Vec<String>,
    pub ood_class_names: Vec<String>,
    pub norm: NormStats,
}

/// Splits classes into ID/OOD and normalizes with `norm`, or with
/// statistics fitted on ID train when `norm` is `None`.
pub fn prepare(train: &TimeSeriesDataset, test: &TimeSeriesDataset, seed: u64, norm: Option<NormStats>) -> Result<Prepared> {
    let split = split_id_ood(train, test, seed).map_err(|e| CliError::run("splitting classes", e))?;
    let norm = norm.unwrap_or_else(|| NormStats::fit(&split.id_train));
    let n_id = split.spec.id_classes.len();
    Ok(Prepared {
        id_train: norm.apply(&split.id_train),
        id_test: norm.apply(&split.id_test),
        ood: SealedOod {
            raw: split.ood_test,
            norm: norm.clone(),
        },
        id_class_names: train.class_names[..n_id].to_vec(),
        ood_class_names: train.class_names[n_id..].to_vec(),
        norm,
    })
}

pub fn fit_scorers(config: &PipelineConfig, model: &ModelArtifacts, id_train: &TimeSeriesDataset) -> Result<FittedScorers> {
    let features = IdFeatures::compute(model, id_train).map_err(|e| CliError::run("computing ID features", e))?;
    let scorers = config
        .methods
        .iter()
        .map(|&method| {
            let spec = ScorerSpec {
                method,
                params: config.scorer_params.clone(),
            };
            fit_with_features(&spec, model, &features).map_err(|e| CliError::run(format!("fitting {method}"), e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedScorers { scorers })
}

pub struct TrainOutcome {
    pub model: ModelArtifacts,
    pub log: Vec<TrainLogRow>,
}

pub fn run_training(config: &PipelineConfig, base_dir: &Path) -> Result<TrainOutcome> {
    let (train_ds, test_ds) = load_dataset(&config.dataset, base_dir, config.seed)?;
    let prepared = prepare(&train_ds, &test_ds, config.seed, None)?;
    let model_cfg: ModelConfig = config.model_config(
        prepared.id_train.dims(),
        prepared.id_train.length(),
        prepared.id_class_names.len(),
        derive(config.seed, "model.init"),
    );
    let mut model = ModelArtifacts::build(&model_cfg).map_err(|e| CliError::run("building model", e))?;
    model.norm = prepared.norm.clone();
    let train_cfg = config.train.to_train_config(derive(config.seed, "train"))?;
    let (mut model, log) = train(model, &prepared.id_train, Some(&prepared.id_test), &train_cfg)
        .map_err(|e| CliError::run("training", e))?;
    // Checkpoints hold f32 weights; evaluate what gets saved.
    model.round_to_f32();
    Ok(TrainOutcome { model, log })
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub mixture: EvalMixture,
    pub scores: Vec<BatchScores>,
    pub fitted: FittedScorers,
}

fn check_dims(model: &ModelArtifacts, p: &Prepared) -> Result<()> {
    let c = &model.config;
    let want = (p.id_train.dims(), p.id_train.length(), p.id_class_names.len());
    if (c.in_channels, c.seq_len, c.n_classes) != want {
        return Err(CliError::Run(format!(
            "DimsMismatch: checkpoint expects d={}, L={}, {} classes but the dataset gives d={}, L={}, {} ID classes",
            c.in_channels, c.seq_len, c.n_classes, want.0, want.1, want.2
        )));
    }
    Ok(())
}

/// Prepares the data for a trained model, checking that shapes agree.
pub fn prepare_for_model(config: &PipelineConfig, base_dir: &Path, model: &ModelArtifacts) -> Result<Prepared> {
    let (train_ds, test_ds) = load_dataset(&config.dataset, base_dir, config.seed)?;
    if train_ds.dims() != model.config.in_channels || train_ds.length() != model.config.seq_len {
        return Err(CliError::Run(format!(
            "DimsMismatch: checkpoint expects d={}, L={} but the dataset gives d={}, L={}",
            model.config.in_channels,
            model.config.seq_len,
            train_ds.dims(),
            train_ds.length()
        )));
    }
    let prepared = prepare(&train_ds, &test_ds, config.seed, Some(model.norm.clone()))?;
    check_dims(model, &prepared)?;
    Ok(prepared)
}

/// Opens the OOD side once scorers exist and draws the balanced mixture.
pub fn open_mixture(config: &PipelineConfig, prepared: Prepared, fitted: &FittedScorers) -> Result<(EvalMixture, OpenedSplit)> {
    let Prepared {
        id_train,
        id_test,
        ood,
        id_class_names,
        ood_class_names,
        ..
    } = prepared;
    let ood_test = ood.open(fitted);
    let mixture = make_eval_mixture(&id_test, &ood_test, derive(config.seed, "mixture"))
        .map_err(|e| CliError::run("building evaluation mixture", e))?;
    Ok((
        mixture,
        OpenedSplit {
            n_id_train: id_train.len(),
            id_test,
            n_ood_test: ood_test.len(),
            id_class_names,
            ood_class_names,
        },
    ))
}

/// What remains of [`Prepared`] after the OOD side is opened.
pub struct OpenedSplit {
    pub n_id_train: usize,
    pub id_test: TimeSeriesDataset,
    pub n_ood_test: usize,
    pub id_class_names: Vec<String>,
    pub ood_class_names: Vec<String>,
}

pub fn run_evaluation(config: &PipelineConfig, base_dir: &Path, model: &ModelArtifacts) -> Result<EvalOutcome> {
    let prepared = prepare_for_model(config, base_dir, model)?;
    let fitted = fit_scorers(config, model, &prepared.id_train)?;
    let (mixture, rest) = open_mixture(config, prepared, &fitted)?;
    let id_accuracy = evaluate_id_accuracy(model, &rest.id_test).map_err(|e| CliError::run("ID accuracy", e))?;
    let forward = model
        .forward_batched(&mixture.values, 64)
        .map_err(|e| CliError::run("forward pass on the mixture", e))?;
    let scores = score_instances(fitted.scorers(), model, &mixture.values, Some(&forward))
        .map_err(|e| CliError::run("scoring", e))?;
    let labels = mixture.labels();
    let mut methods = IndexMap::new();
    for (scorer, batch) in fitted.scorers().iter().zip(&scores) {
        let name = scorer.method().name();
        if let Some(i) = batch.scores.iter().position(|s| !s.is_finite()) {
            return Err(CliError::Run(format!("{name} produced a non-finite score for sample {i}")));
        }
        let metric = |e| CliError::run(format!("metrics for {name}"), e);
        methods.insert(
            name.to_string(),
            MethodResult {
                auroc: auroc(&batch.scores, &labels).map_err(metric)?,
                aupr: aupr(&batch.scores, &labels).map_err(metric)?,
                mean_latency_ms: batch.latency_ms.iter().sum::<f64>() / batch.latency_ms.len() as f64,
            },
        );
    }
    let report = EvalReport {
        schema_version: RESULTS_SCHEMA_VERSION,
        dataset: config.dataset.label(),
        arch: model.config.arch.name().to_string(),
        loss: config.train.loss.name().to_string(),
        augmentation: config
            .train
            .augmentation()?
            .map(|a| a.kind().to_string()),
        split: SplitReport {
            id_classes: rest.id_class_names,
            ood_classes: rest.ood_class_names,
            n_id_train: rest.n_id_train,
            n_id_test: rest.id_test.len(),
            n_ood_test: rest.n_ood_test,
            n_mixture: mixture.len(),
            mixture_seed: derive(config.seed, "mixture"),
        },
        positive_class: "ood".into(),
        config_digest: config.digest(),
        seed: config.seed,
        id_accuracy,
        methods,
    };
    Ok(EvalOutcome {
        report,
        mixture,
        scores,
        fitted,
    })
}
