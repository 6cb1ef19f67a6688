//! Cartesian sweeps over datasets, architectures, losses and augmentations.


use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tsood_core::augment::AugmentationConfig;
use tsood_core::metrics::{correlation_study, CorrelationRun};

use crate::commands::{cmd_eval, cmd_train, Run};
use crate::config::{LoadedConfig, MatrixSection, PipelineConfig};
use crate::error::{CliError, Result};
use crate::output::{write_csv, write_json, CsvPreamble, EvalReport};

pub const RUNS_DIR: &str = "runs";
pub const SUMMARY: &str = "summary.csv";
pub const CORRELATION: &str = "correlation.csv";
pub const MATRIX_INDEX: &str = "matrix.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub dataset: String,
    pub arch: String,
    pub loss: String,
    pub augmentation: String,
    pub config_digest: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub report: Option<EvalReport>,
}

#[derive(Clone, Debug)]
pub struct MatrixOutcome {
    pub cells: Vec<CellRecord>,
    pub wrote_correlation: bool,
    pub wrote_augmentation_table: bool,
}

fn aug_label(a: &Option<AugmentationConfig>) -> String {
    a.as_ref()
        .and_then(|a| a.resolve().ok())
        .map(|a| a.kind().to_string())
        .unwrap_or_else(|| "none".into())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Expands the matrix section into per-cell configs in a fixed order:
/// datasets, then architectures, losses and augmentations.
pub fn expand(base: &PipelineConfig) -> Vec<PipelineConfig> {
    let m = base.matrix.clone().unwrap_or_default();
    let MatrixSection {
        datasets,
        archs,
        losses,
        augmentations,
    } = m;
    let datasets = if datasets.is_empty() { vec![base.dataset.clone()] } else { datasets };
    let archs = if archs.is_empty() { vec![base.model.arch] } else { archs };
    let losses = if losses.is_empty() { vec![base.train.loss] } else { losses };
    let augs = if augmentations.is_empty() {
        vec![base.train.augmentation.clone()]
    } else {
        augmentations
    };
    let mut cells = Vec::new();
    for d in &datasets {
        for &a in &archs {
            for &l in &losses {
                for aug in &augs {
                    let mut c = base.clone();
                    c.matrix = None;
                    c.output_dir = None;
                    c.dataset = d.clone();
                    c.model.arch = a;
                    c.train.loss = l;
                    c.train.augmentation = aug.clone();
                    cells.push(c);
                }
            }
        }
    }
    cells
}

fn run_cell(index: usize, cfg: PipelineConfig, base: &LoadedConfig, runs_dir: &std::path::Path) -> CellRecord {
    let dataset = cfg.dataset.label();
    let arch = cfg.model.arch.name().to_string();
    let loss = cfg.train.loss.name().to_string();
    let augmentation = aug_label(&cfg.train.augmentation);
    let id = format!("{index:03}-{}-{arch}-{loss}-{augmentation}", sanitize(&dataset));
    let digest = cfg.digest();
    let result = (|| -> Result<EvalReport> {
        cfg.validate(&base.base_dir)?;
        let run = Run {
            loaded: LoadedConfig::from_config(cfg, base.base_dir.clone()),
            out: runs_dir.join(&id),
        };
        cmd_train(&run)?;
        cmd_eval(&run, None)
    })();
    let (ok, error, report) = match result {
        Ok(r) => (true, None, Some(r)),
        Err(e) => (false, Some(e.to_string()), None),
    };
    CellRecord {
        id,
        dataset,
        arch,
        loss,
        augmentation,
        config_digest: digest,
        ok,
        error,
        report,
    }
}

#[derive(Default)]
struct Mean {
    auroc: f64,
    aupr: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, auroc: f64, aupr: f64) {
        self.auroc += auroc;
        self.aupr += aupr;
        self.n += 1;
    }
}

fn summary_rows(cells: &[CellRecord], with_augmentation: bool) -> Vec<Vec<String>> {
    let mut groups: IndexMap<(&str, String, String), Mean> = IndexMap::new();
    for cell in cells {
        let Some(report) = &cell.report else { continue };
        for (method, r) in &report.methods {
            groups
                .entry(("arch_method", cell.arch.clone(), method.clone()))
                .or_default()
                .add(r.auroc, r.aupr);
        }
        if with_augmentation {
            for r in report.methods.values() {
                groups
                    .entry(("augmentation_dataset", cell.augmentation.clone(), cell.dataset.clone()))
                    .or_default()
                    .add(r.auroc, r.aupr);
            }
        }
        for (method, r) in &report.methods {
            groups
                .entry(("loss_method", cell.loss.clone(), method.clone()))
                .or_default()
                .add(r.auroc, r.aupr);
        }
    }
    let mut rows: Vec<_> = groups.into_iter().collect();
    // Stable sort keeps first-appearance order inside each grouping.
    let rank = |g: &str| ["arch_method", "augmentation_dataset", "loss_method"].iter().position(|x| *x == g);
    rows.sort_by_key(|((g, _, _), _)| rank(g));
    rows.into_iter()
        .map(|((g, a, b), m)| {
            vec![
                g.to_string(),
                a,
                b,
                (m.auroc / m.n as f64).to_string(),
                (m.aupr / m.n as f64).to_string(),
                m.n.to_string(),
            ]
        })
        .collect()
}

/// Runs every cell on a pool of `jobs` threads. A failing cell is recorded
/// and the sweep continues.
pub fn cmd_matrix(run: &Run, jobs: usize) -> Result<MatrixOutcome> {
    let base = &run.loaded;
    let cells = expand(&base.config);
    let runs_dir = run.out.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir).map_err(|e| CliError::run(format!("creating {}", runs_dir.display()), e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::run("building matrix thread pool", e))?;
    let records: Vec<CellRecord> = pool.install(|| {
        cells
            .into_par_iter()
            .enumerate()
            .map(|(i, c)| run_cell(i, c, base, &runs_dir))
            .collect()
    });

    let preamble = CsvPreamble::new(&run.digest(), run.seed());
    write_json(&run.out.join(MATRIX_INDEX), &records)?;

    let m = base.config.matrix.clone().unwrap_or_default();
    let with_augmentation = m.augmentations.len() > 1;
    write_csv(
        &run.out.join(SUMMARY),
        &preamble,
        &["grouping", "group", "key", "mean_auroc", "mean_aupr", "n_runs"],
        &summary_rows(&records, with_augmentation),
    )?;

    let n_datasets = m.datasets.len().max(1);
    let mut wrote_correlation = false;
    if n_datasets >= 2 {
        let runs: Vec<CorrelationRun> = records
            .iter()
            .filter_map(|c| c.report.as_ref().map(|r| (c, r)))
            .map(|(c, r)| CorrelationRun {
                dataset: c.dataset.clone(),
                id_accuracy: r.id_accuracy,
                auroc: r.methods.iter().map(|(k, v)| (k.clone(), v.auroc)).collect(),
            })
            .collect();
        let rows: Vec<Vec<String>> = match correlation_study(&runs) {
            Ok(rows) => rows
                .into_iter()
                .map(|r| {
                    vec![
                        r.method,
                        r.pcc.map(|p| p.to_string()).unwrap_or_else(|| "n/a".into()),
                        r.n_datasets.to_string(),
                        r.degenerate.to_string(),
                    ]
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        write_csv(
            &run.out.join(CORRELATION),
            &preamble,
            &["method", "pcc", "n_runs", "degenerate"],
            &rows,
        )?;
        wrote_correlation = true;
    }
    Ok(MatrixOutcome {
        cells: records,
        wrote_correlation,
        wrote_augmentation_table: with_augmentation,
    })
}
