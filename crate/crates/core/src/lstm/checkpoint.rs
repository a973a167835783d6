//! Model checkpoints: a JSON manifest describing the network and tensor
//! layout, plus a flat little-endian `f64` parameter file in the manifest's
//! tensor order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LstmModel, NetworkConfig, Params, TensorSpec, TrainConfig};
use crate::error::{Error, Result};

pub const FORMAT: &str = "swvmd-lstm/f64-le/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub network: NetworkConfig,
    pub input_dim: usize,
    pub train: Option<TrainConfig>,
    pub param_count: usize,
    pub tensors: Vec<TensorSpec>,
    /// Parameter file name, relative to the manifest.
    pub data_file: String,
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the manifest path.
pub fn save_checkpoint(model: &LstmModel, train: Option<&TrainConfig>, dir: &Path, stem: &str) -> Result<PathBuf> {
    let data_file = format!("{stem}.bin");
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        network: model.config,
        input_dim: model.input_dim,
        train: train.copied(),
        param_count: model.params.count(),
        tensors: model.params.specs(),
        data_file: data_file.clone(),
    };
    let bytes: Vec<u8> = model.params.flatten().iter().flat_map(|v| v.to_le_bytes()).collect();
    let bin = dir.join(&data_file);
    std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&json, e))?;
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(json)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(LstmModel, CheckpointManifest)> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    if manifest.format != FORMAT {
        return Err(Error::Input(format!("unsupported checkpoint format {:?}", manifest.format)));
    }
    let mut params = Params::zeros(&manifest.network, manifest.input_dim);
    if params.specs() != manifest.tensors {
        return Err(Error::Shape("checkpoint tensor layout does not match its network config".into()));
    }
    let bin = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.data_file);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != 8 * manifest.param_count || manifest.param_count != params.count() {
        return Err(Error::Shape(format!(
            "{}: {} bytes for {} parameters",
            bin.display(),
            bytes.len(),
            manifest.param_count
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    let model = LstmModel::from_params(&manifest.network, manifest.input_dim, params)?;
    Ok((model, manifest))
}
