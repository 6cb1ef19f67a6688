use std::path::{Path, PathBuf};

use tsood_core::bench::{overhead_benchmark, OverheadRow};
use tsood_core::model::{load_checkpoint, read_manifest, save_checkpoint, ModelArtifacts};
use tsood_core::train::TrainLogRow;

use crate::config::LoadedConfig;
use crate::error::{CliError, Result};
use crate::output::{write_csv, write_json, CsvPreamble, EvalReport};
use crate::pipeline::{fit_scorers, open_mixture, prepare_for_model, run_evaluation, run_training};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const RESULTS: &str = "results.json";
pub const SCORES: &str = "scores.csv";
pub const OVERHEAD: &str = "overhead.csv";

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub checkpoint: Option<PathBuf>,
}

/// A validated config with overrides applied and its output directory.
#[derive(Clone, Debug)]
pub struct Run {
    pub loaded: LoadedConfig,
    pub out: PathBuf,
}

impl Run {
    pub fn new(mut loaded: LoadedConfig, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            loaded.config.seed = seed;
        }
        loaded.config.validate(&loaded.base_dir)?;
        let out = overrides
            .out
            .clone()
            .or_else(|| loaded.output_dir())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
        Ok(Self { loaded, out })
    }

    pub fn from_path(config: &Path, overrides: &Overrides) -> Result<Self> {
        Self::new(LoadedConfig::load(config)?, overrides)
    }

    pub fn digest(&self) -> String {
        self.loaded.config.digest()
    }

    pub fn seed(&self) -> u64 {
        self.loaded.config.seed
    }

    fn preamble(&self) -> CsvPreamble {
        CsvPreamble::new(&self.digest(), self.seed())
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::run(format!("creating {}", self.out.display()), e))
    }

    fn checkpoint_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit.map(Path::to_path_buf).unwrap_or_else(|| self.out.join(CHECKPOINT_DIR))
    }
}

fn load_model(dir: &Path) -> Result<ModelArtifacts> {
    if !dir.join(tsood_core::model::MANIFEST_FILE).is_file() {
        return Err(CliError::Config(format!("--checkpoint: {} holds no checkpoint", dir.display())));
    }
    load_checkpoint(dir)
        .map(|(m, _)| m)
        .map_err(|e| CliError::run(format!("loading checkpoint {}", dir.display()), e))
}

fn write_train_log(run: &Run, rows: &[TrainLogRow]) -> Result<()> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.loss.to_string(),
                r.id_val_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &run.out.join(TRAIN_LOG),
        &run.preamble(),
        &["epoch", "loss", "id_val_accuracy"],
        &records,
    )
}

/// Trains a backbone and writes `checkpoint/` and `train_log.csv` under
/// the output directory. Returns the checkpoint directory.
pub fn cmd_train(run: &Run) -> Result<PathBuf> {
    let cfg = &run.loaded.config;
    let outcome = run_training(cfg, &run.loaded.base_dir)?;
    run.ensure_out()?;
    let dir = run.checkpoint_dir(None);
    let extra = serde_json::json!({
        "config": cfg.canonical(),
        "config_digest": run.digest(),
        "seed": cfg.seed,
    });
    save_checkpoint(&outcome.model, &dir, extra).map_err(|e| CliError::run("saving checkpoint", e))?;
    write_train_log(run, &outcome.log)?;
    Ok(dir)
}

/// Fits the configured scorers, scores the evaluation mixture and writes
/// `results.json` and `scores.csv`. Fitted scorers go into the checkpoint
/// directory.
pub fn cmd_eval(run: &Run, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let dir = run.checkpoint_dir(checkpoint);
    let model = load_model(&dir)?;
    let cfg = &run.loaded.config;
    let outcome = run_evaluation(cfg, &run.loaded.base_dir, &model)?;
    run.ensure_out()?;
    for s in outcome.fitted.scorers() {
        s.save(&dir).map_err(|e| CliError::run(format!("saving {} scorer", s.method()), e))?;
    }
    write_json(&run.out.join(RESULTS), &outcome.report)?;
    let mut rows = Vec::with_capacity(outcome.scores.len() * outcome.mixture.len());
    for (scorer, batch) in outcome.fitted.scorers().iter().zip(&outcome.scores) {
        for (i, origin) in outcome.mixture.origins.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                if origin.is_ood { "ood" } else { "id" }.to_string(),
                scorer.method().name().to_string(),
                batch.scores[i].to_string(),
                batch.latency_ms[i].to_string(),
            ]);
        }
    }
    write_csv(
        &run.out.join(SCORES),
        &run.preamble().with("positive_class", "ood"),
        &["sample_id", "truth", "method", "score", "latency_ms"],
        &rows,
    )?;
    Ok(outcome.report)
}

/// Per-sample overhead of each scorer on a one-thread pool, whatever
/// `--jobs` says. Writes `overhead.csv`.
pub fn cmd_bench(run: &Run, checkpoint: Option<&Path>) -> Result<Vec<OverheadRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::run("building bench thread pool", e))?;
    let rows = pool.install(|| -> Result<Vec<OverheadRow>> {
        assert_eq!(rayon::current_num_threads(), 1, "bench runs on exactly one thread");
        let dir = run.checkpoint_dir(checkpoint);
        let model = load_model(&dir)?;
        let cfg = &run.loaded.config;
        let prepared = prepare_for_model(cfg, &run.loaded.base_dir, &model)?;
        let fitted = fit_scorers(cfg, &model, &prepared.id_train)?;
        let (mixture, _) = open_mixture(cfg, prepared, &fitted)?;
        overhead_benchmark(fitted.scorers(), &model, &mixture.values, &cfg.bench)
            .map_err(|e| CliError::run("overhead benchmark", e))
    })?;
    run.ensure_out()?;
    let bench = &run.loaded.config.bench;
    let preamble = run
        .preamble()
        .with("jobs", 1)
        .with("warmup", bench.warmup)
        .with("repeats", bench.repeats)
        .with("include_forward", bench.include_forward);
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.mean_ms.to_string(),
                r.min_ms.to_string(),
                r.max_ms.to_string(),
                r.repeats.to_string(),
            ]
        })
        .collect();
    write_csv(
        &run.out.join(OVERHEAD),
        &preamble,
        &["method", "mean_ms", "min_ms", "max_ms", "repeats"],
        &records,
    )?;
    Ok(rows)
}

/// Summary of a checkpoint directory as JSON.
pub fn cmd_inspect(dir: &Path) -> Result<serde_json::Value> {
    if !dir.join(tsood_core::model::MANIFEST_FILE).is_file() {
        return Err(CliError::Config(format!("{} holds no checkpoint", dir.display())));
    }
    let manifest = read_manifest(dir).map_err(|e| CliError::run("reading manifest", e))?;
    let model = load_model(dir)?;
    let mut scorers: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| CliError::run(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.strip_prefix("scorer_")
                .and_then(|s| s.strip_suffix(".json"))
                .map(String::from)
        })
        .collect();
    scorers.sort();
    Ok(serde_json::json!({
        "schema_version": manifest.schema_version,
        "arch": manifest.arch,
        "config": manifest.config,
        "weights": manifest.weights.len(),
        "parameters": model.parameter_count(),
        "training": manifest.training,
        "normalization": manifest.norm,
        "config_digest": manifest.extra.get("config_digest"),
        "seed": manifest.extra.get("seed"),
        "fitted_scorers": scorers,
    }))
}
