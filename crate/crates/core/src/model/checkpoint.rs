//! Parameter checkpoints: `<stem>.json` manifest plus `<stem>.bin` holding
//! every learnable array as little-endian `f64` in declared order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{init_params, ModelConfig, ModelParams};
use crate::features::cache::{read_f64_le, write_f64_le};
use crate::features::ImputationStats;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub schema_hash: String,
    pub seed: u64,
    pub age_center: f64,
    pub age_scale: f64,
    pub arrays: Vec<ArrayEntry>,
    /// Encoding statistics of the training data, when the model is meant to
    /// be applied to raw visits later.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imputation: Option<ImputationStats>,
}

pub struct Checkpoint {
    pub params: ModelParams,
    pub manifest: CheckpointManifest,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

pub fn save_checkpoint(
    stem: &Path,
    params: &ModelParams,
    schema_hash: &str,
    seed: u64,
    imputation: Option<&ImputationStats>,
) -> Result<CheckpointManifest> {
    let slices = params.named_slices();
    let manifest = CheckpointManifest {
        config: params.config.clone(),
        schema_hash: schema_hash.to_string(),
        seed,
        age_center: params.age_center,
        age_scale: params.age_scale,
        arrays: slices.iter().map(|(name, s)| ArrayEntry { name: name.clone(), len: s.len() }).collect(),
        imputation: imputation.cloned(),
    };
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let json_path = with_ext(stem, "json");
    fs::write(&json_path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&json_path, e))?;
    let bin_path = with_ext(stem, "bin");
    fs::write(&bin_path, write_f64_le(&params.to_flat())).map_err(|e| Error::io(&bin_path, e))?;
    Ok(manifest)
}

/// Loads a checkpoint, refusing it if `expected_schema_hash` is given and differs.
pub fn load_checkpoint(stem: &Path, expected_schema_hash: Option<&str>) -> Result<Checkpoint> {
    let json_path = with_ext(stem, "json");
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if let Some(expected) = expected_schema_hash {
        if expected != manifest.schema_hash {
            return Err(Error::SchemaMismatch { expected: expected.to_string(), found: manifest.schema_hash });
        }
    }
    let mut params = init_params(&manifest.config, 0)?;
    let layout: Vec<ArrayEntry> =
        params.named_slices().iter().map(|(name, s)| ArrayEntry { name: name.clone(), len: s.len() }).collect();
    if layout != manifest.arrays {
        return Err(Error::Parse(format!("{}: array layout does not match the model config", json_path.display())));
    }
    let bin_path = with_ext(stem, "bin");
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    params.assign_flat(&read_f64_le(&bytes)?)?;
    params.set_age_scaling(manifest.age_center, manifest.age_scale);
    Ok(Checkpoint { params, manifest })
}
