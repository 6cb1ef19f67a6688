use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsood_cli::output::read_csv;
use tsood_core::data::{generate_synthetic, SplitTag, SyntheticConfig};

fn tsood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsood")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synthetic(name: &str, length: usize) -> String {
    format!(
        r#"{{"kind": "synthetic", "name": "{name}", "classes": 4, "train_per_class": 8, "test_per_class": 8, "dims": 2, "length": {length}}}"#
    )
}

fn write_config(dir: &Path, file: &str, body: &str) -> PathBuf {
    let p = dir.join(file);
    std::fs::write(&p, body).unwrap();
    p
}

fn basic(dir: &Path, length: usize) -> PathBuf {
    write_config(
        dir,
        &format!("basic{length}.json"),
        &format!(
            r#"{{"seed": 11, "dataset": {}, "model": {{"width": 8}}, "train": {{"epochs": 2}}, "bench": {{"warmup": 2, "repeats": 3}}}}"#,
            synthetic("waves", length)
        ),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_eval_inspect_succeed_and_same_seed_gives_same_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = basic(tmp.path(), 24);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = tsood(&["train", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let weights = |d: &Path| std::fs::read(d.join("checkpoint/weights.bin")).unwrap();
    assert_eq!(weights(&a), weights(&b));

    let o = tsood(&["eval", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["methods"].as_object().unwrap().len(), 10);
    assert_eq!(results["positive_class"], "ood");
    assert_eq!(results["split"]["id_classes"].as_array().unwrap().len(), 2);

    let (pre, header, rows) = read_csv(&a.join("scores.csv")).unwrap();
    assert!(pre.iter().any(|(k, v)| k == "seed" && v == "11"));
    assert!(pre.iter().any(|(k, _)| k == "config_digest"));
    assert_eq!(header, ["sample_id", "truth", "method", "score", "latency_ms"]);
    let n_mixture = results["split"]["n_mixture"].as_u64().unwrap() as usize;
    assert_eq!(rows.len(), 10 * n_mixture);

    let o = tsood(&["inspect", s(&a.join("checkpoint"))]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["arch"], "resnet1d");
    assert_eq!(v["fitted_scorers"].as_array().unwrap().len(), 10);
    assert!(v["parameters"].as_u64().unwrap() > 0);
}

#[test]
fn seed_override_reaches_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = basic(tmp.path(), 16);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&tsood(&["train", "--config", s(&cfg), "--out", s(&a)])), 0);
    assert_eq!(code(&tsood(&["train", "--config", s(&cfg), "--out", s(&b), "--seed", "5"])), 0);
    let (pre, _, _) = read_csv(&b.join("train_log.csv")).unwrap();
    assert!(pre.iter().any(|(k, v)| k == "seed" && v == "5"));
    let weights = |d: &Path| std::fs::read(d.join("checkpoint/weights.bin")).unwrap();
    assert_ne!(weights(&a), weights(&b));
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let unknown = write_config(
        tmp.path(),
        "unknown.json",
        &format!(r#"{{"seed": 1, "dataset": {}, "trian": {{}}}}"#, synthetic("w", 16)),
    );
    let o = tsood(&["train", "--config", s(&unknown), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trian"), "{}", stderr(&o));

    let missing = write_config(
        tmp.path(),
        "missing.json",
        r#"{"seed": 1, "dataset": {"kind": "ts", "train": "nowhere_TRAIN.ts", "test": "nowhere_TEST.ts"}}"#,
    );
    let o = tsood(&["train", "--config", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dataset.train"), "{}", stderr(&o));

    let cfg = basic(tmp.path(), 16);
    let o = tsood(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);

    let o = tsood(&["train", "--config", s(&tmp.path().join("absent.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 2);

    let o = tsood(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn mismatched_checkpoint_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let short = basic(tmp.path(), 16);
    let long = basic(tmp.path(), 24);
    let a = tmp.path().join("a");
    assert_eq!(code(&tsood(&["train", "--config", s(&short), "--out", s(&a)])), 0);
    let o = tsood(&[
        "eval",
        "--config",
        s(&long),
        "--out",
        s(&tmp.path().join("b")),
        "--checkpoint",
        s(&a.join("checkpoint")),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("DimsMismatch"), "{}", stderr(&o));
}

#[test]
fn bench_writes_one_row_per_method_on_one_thread() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = basic(tmp.path(), 16);
    let out = tmp.path().join("o");
    assert_eq!(code(&tsood(&["train", "--config", s(&cfg), "--out", s(&out)])), 0);
    let o = tsood(&["bench", "--config", s(&cfg), "--out", s(&out), "--jobs", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("one thread"));
    let (pre, header, rows) = read_csv(&out.join("overhead.csv")).unwrap();
    assert!(pre.contains(&("jobs".to_string(), "1".to_string())));
    assert_eq!(header, ["method", "mean_ms", "min_ms", "max_ms", "repeats"]);
    assert_eq!(rows.len(), 10);
    for r in rows {
        let (mean, min, max): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!(min > 0.0 && min <= mean && mean <= max, "{r:?}");
        assert_eq!(r[4], "3");
    }
}

fn single_class_ts(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = SyntheticConfig {
        classes: 1,
        n_per_class: 6,
        dims: 2,
        length: 16,
        seed: 3,
    };
    let mut paths = Vec::new();
    for (split, tag) in [(SplitTag::Train, "TRAIN"), (SplitTag::Test, "TEST")] {
        let mut ds = generate_synthetic(&cfg, split);
        ds.name = "lonely".into();
        let p = dir.join(format!("lonely_{tag}.ts"));
        std::fs::write(&p, ds.to_ts_string()).unwrap();
        paths.push(p);
    }
    (paths[0].clone(), paths[1].clone())
}

#[test]
fn matrix_isolates_failures_and_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, test) = single_class_ts(tmp.path());
    let cfg = write_config(
        tmp.path(),
        "matrix.json",
        &format!(
            r#"{{"seed": 2, "dataset": {a}, "model": {{"width": 8}}, "train": {{"epochs": 2, "probe_epochs": 2}},
                "methods": ["MSP", "EBO", "DFM-PCA"],
                "matrix": {{"datasets": [{a}, {b}, {{"kind": "ts", "train": "{train}", "test": "{test}"}}],
                           "archs": ["resnet1d"], "losses": ["ce", "mpc"]}}}}"#,
            a = synthetic("alpha", 16),
            b = synthetic("beta", 16),
            train = train.file_name().unwrap().to_str().unwrap(),
            test = test.file_name().unwrap().to_str().unwrap(),
        ),
    );
    let out = tmp.path().join("m");
    let o = tsood(&["matrix", "--config", s(&cfg), "--out", s(&out), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let index: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("matrix.json")).unwrap()).unwrap();
    assert_eq!(index.len(), 6);
    let ok: Vec<bool> = index.iter().map(|c| c["ok"].as_bool().unwrap()).collect();
    assert_eq!(ok, [true, true, true, true, false, false]);
    assert!(index[4]["error"].as_str().unwrap().len() > 0);
    assert!(out.join("runs").join(index[0]["id"].as_str().unwrap()).join("results.json").is_file());

    let (_, header, rows) = read_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(header, ["grouping", "group", "key", "mean_auroc", "mean_aupr", "n_runs"]);
    let arch_rows: Vec<_> = rows.iter().filter(|r| r[0] == "arch_method").collect();
    assert_eq!(arch_rows.len(), 3);
    assert!(arch_rows.iter().all(|r| r[5] == "4"));
    assert_eq!(rows.iter().filter(|r| r[0] == "loss_method").count(), 6);
    assert!(!rows.iter().any(|r| r[0] == "augmentation_dataset"));

    let (_, header, rows) = read_csv(&out.join("correlation.csv")).unwrap();
    assert_eq!(header, ["method", "pcc", "n_runs", "degenerate"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2] == "4"));
}

#[test]
fn augmentation_table_and_no_correlation_for_one_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "aug.json",
        &format!(
            r#"{{"seed": 4, "dataset": {}, "model": {{"width": 8}}, "train": {{"epochs": 2}}, "methods": ["MSP"],
                "matrix": {{"augmentations": [null, {{"kind": "jitter"}}, {{"kind": "flip"}}]}}}}"#,
            synthetic("gamma", 16)
        ),
    );
    let out = tmp.path().join("m");
    let o = tsood(&["matrix", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, _, rows) = read_csv(&out.join("summary.csv")).unwrap();
    let groups: Vec<&str> = rows
        .iter()
        .filter(|r| r[0] == "augmentation_dataset")
        .map(|r| r[1].as_str())
        .collect();
    assert_eq!(groups, ["none", "jitter", "flip"]);
    assert!(!out.join("correlation.csv").exists());
}
