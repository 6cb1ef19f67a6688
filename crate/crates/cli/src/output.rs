//! Report types and writers. CSV files start with `# key: value` lines
//! carrying the config digest and seed.

use std::io::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub auroc: f64,
    pub aupr: f64,
    pub mean_latency_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub id_classes: Vec<String>,
    pub ood_classes: Vec<String>,
    pub n_id_train: usize,
    pub n_id_test: usize,
    pub n_ood_test: usize,
    pub n_mixture: usize,
    pub mixture_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    pub arch: String,
    pub loss: String,
    pub augmentation: Option<String>,
    pub split: SplitReport,
    pub positive_class: String,
    pub config_digest: String,
    pub seed: u64,
    pub id_accuracy: f64,
    pub methods: IndexMap<String, MethodResult>,
}

/// `results.json` with every latency field removed, for comparisons.
pub fn strip_latency(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.contains("latency"));
            map.values_mut().for_each(strip_latency);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_latency),
        _ => {}
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::run(format!("writing {}", path.display()), e)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::run("serializing", e))?;
    std::fs::write(path, text + "\n").map_err(io(path))
}

/// Provenance lines written ahead of a CSV header.
#[derive(Clone, Debug)]
pub struct CsvPreamble(pub Vec<(String, String)>);

impl CsvPreamble {
    pub fn new(digest: &str, seed: u64) -> Self {
        Self(vec![("config_digest".into(), digest.into()), ("seed".into(), seed.to_string())])
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.push((key.into(), value.to_string()));
        self
    }
}

pub fn write_csv(path: &Path, preamble: &CsvPreamble, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io(path))?);
    for (k, v) in &preamble.0 {
        writeln!(file, "# {k}: {v}").map_err(io(path))?;
    }
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::run(format!("writing {}", path.display()), e);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

/// Reads a CSV written by [`write_csv`]: preamble pairs, header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<(String, String)>, Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::run(format!("reading {}", path.display()), e))?;
    let mut preamble = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        match line.strip_prefix("# ") {
            Some(kv) => {
                let (k, v) = kv.split_once(": ").unwrap_or((kv, ""));
                preamble.push((k.to_string(), v.to_string()));
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let bad = |e: csv::Error| CliError::run(format!("parsing {}", path.display()), e);
    let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(bad)?;
    Ok((preamble, header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_preamble() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let pre = CsvPreamble::new("abc", 7).with("jobs", 1);
        let rows = vec![vec!["a,b".to_string(), "1.5".into()], vec!["c".into(), "2".into()]];
        write_csv(&p, &pre, &["name", "value"], &rows).unwrap();
        let (meta, header, back) = read_csv(&p).unwrap();
        assert_eq!(meta[0], ("config_digest".to_string(), "abc".to_string()));
        assert_eq!(meta[2], ("jobs".to_string(), "1".to_string()));
        assert_eq!(header, ["name", "value"]);
        assert_eq!(back, rows);
    }

    #[test]
    fn strip_latency_is_recursive() {
        let mut v = serde_json::json!({"a": 1, "methods": {"MSP": {"auroc": 0.5, "mean_latency_ms": 0.1}}});
        strip_latency(&mut v);
        assert_eq!(v, serde_json::json!({"a": 1, "methods": {"MSP": {"auroc": 0.5}}}));
    }
}
