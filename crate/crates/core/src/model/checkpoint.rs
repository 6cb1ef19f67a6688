//! Checkpoint directory: `manifest.json` plus `weights.bin`, the weights as
//! little-endian `f32` concatenated in manifest order.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tsood_tensor::Tensor;

use super::{Arch, ModelArtifacts, ModelConfig, ModelError, Result, TrainingMeta};
use crate::data::NormStats;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub arch: Arch,
    pub config: ModelConfig,
    pub weights: Vec<WeightEntry>,
    pub norm: NormStats,
    pub training: TrainingMeta,
    /// Free-form provenance supplied by the caller (pipeline config, digest).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `model` to `dir`, creating it if needed. Weights are stored at
/// 32-bit precision.
pub fn save_checkpoint(model: &ModelArtifacts, dir: &Path, extra: serde_json::Value) -> Result<()> {
    model.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        arch: model.config.arch,
        config: model.config.clone(),
        weights: model
            .weights
            .iter()
            .map(|(name, t)| WeightEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        norm: model.norm.clone(),
        training: model.meta.clone(),
        extra,
    };
    let mut bytes = Vec::with_capacity(4 * model.weights.values().map(|t| t.numel()).sum::<usize>());
    for t in model.weights.values() {
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| ModelError::Format(e.to_string()))?;
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, json + "\n").map_err(io_err(&mpath))?;
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, bytes).map_err(io_err(&wpath))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| ModelError::Format(format!("{}: {e}", mpath.display())))?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(ModelError::Format(format!(
            "schema version {} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelArtifacts, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(io_err(&wpath))?;
    let total: usize = manifest.weights.iter().map(|w| w.shape.iter().product::<usize>()).sum();
    if bytes.len() != 4 * total {
        return Err(ModelError::Format(format!(
            "{} holds {} bytes, manifest needs {}",
            wpath.display(),
            bytes.len(),
            4 * total
        )));
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut weights = super::WeightMap::new();
    for entry in &manifest.weights {
        let n = entry.shape.iter().product();
        let data: Vec<f64> = floats.by_ref().take(n).collect();
        let t = Tensor::new(entry.shape.clone(), data).map_err(|e| ModelError::Format(e.to_string()))?;
        weights.insert(entry.name.clone(), Arc::new(t));
    }
    if manifest.arch != manifest.config.arch {
        return Err(ModelError::Format("manifest arch disagrees with config".into()));
    }
    let model = ModelArtifacts {
        config: manifest.config.clone(),
        weights,
        norm: manifest.norm.clone(),
        meta: manifest.training.clone(),
    };
    model.validate()?;
    Ok((model, manifest))
}
