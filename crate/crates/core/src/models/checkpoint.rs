//! Checkpoints: a JSON manifest next to a flat little-endian f64 tensor dump.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelParams, ModelSpec, RatingScale};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model_kind: ModelKind,
    pub d: usize,
    pub hidden_widths: Vec<usize>,
    pub num_users: usize,
    pub num_items: usize,
    pub seed: u64,
    pub rating_scale: RatingScale,
    /// Tensor file name, relative to the manifest.
    pub tensors: String,
    pub num_values: usize,
}

fn tensor_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<path>` (manifest) and `<path stem>.bin` (values).
pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bin = tensor_path(path);
    let spec = params.spec();
    let manifest = CheckpointManifest {
        model_kind: spec.model_kind,
        d: spec.d,
        hidden_widths: spec.hidden_widths.clone(),
        num_users: spec.num_users,
        num_items: spec.num_items,
        seed: spec.seed,
        rating_scale: spec.rating_scale,
        tensors: bin
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        num_values: params.len(),
    };
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for x in params.values() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: CheckpointManifest = serde_json::from_str(&text)?;
    let bin = path.with_file_name(&m.tensors);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != m.num_values * 8 {
        return Err(Error::Checkpoint(format!(
            "{} holds {} bytes, manifest expects {}",
            bin.display(),
            bytes.len(),
            m.num_values * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let spec = ModelSpec {
        model_kind: m.model_kind,
        d: m.d,
        hidden_widths: m.hidden_widths,
        num_users: m.num_users,
        num_items: m.num_items,
        seed: m.seed,
        rating_scale: m.rating_scale,
    };
    ModelParams::from_values(spec, values)
}
