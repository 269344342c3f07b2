//! Checkpoint I/O: UTF-8 JSON with base64-encoded little-endian f32 data.
//!
//! The parameter map is keyed by the stable parameter names and sorted, so
//! a given model serializes to identical bytes every time; the round trip
//! is bit-exact.

use super::{ModelConfig, TempoModel};
use crate::error::Error;
use crate::tensor::Tensor;
use crate::Result;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorBlob {
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model_config: ModelConfig,
    experiment_id: u8,
    params: BTreeMap<String, TensorBlob>,
}

pub fn checkpoint_to_string(model: &TempoModel<f32>, experiment_id: u8) -> Result<String> {
    let mut params = BTreeMap::new();
    for p in model.params().iter() {
        let mut bytes = Vec::with_capacity(p.value.numel() * 4);
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        params.insert(
            p.name.clone(),
            TensorBlob {
                shape: p.value.shape().to_vec(),
                data: BASE64.encode(&bytes),
            },
        );
    }
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model_config: *model.config(),
        experiment_id,
        params,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Json {
        path: "<checkpoint>".to_string(),
        source: e,
    })
}

pub fn checkpoint_from_str(text: &str) -> Result<(TempoModel<f32>, u8)> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Json {
        path: "<checkpoint>".to_string(),
        source: e,
    })?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported format_version {}", file.format_version),
        ));
    }
    let mut model = TempoModel::<f32>::new(file.model_config, 0)?;
    if file.params.len() != model.params().len() {
        return Err(Error::format(
            "checkpoint",
            format!(
                "has {} parameters, model expects {}",
                file.params.len(),
                model.params().len()
            ),
        ));
    }
    for slot in 0..model.params().len() {
        let name = model.params().get(slot).name.clone();
        let blob = file
            .params
            .get(&name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing parameter `{name}`")))?;
        let bytes = BASE64
            .decode(&blob.data)
            .map_err(|e| Error::format("checkpoint", format!("parameter `{name}`: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::format(
                "checkpoint",
                format!("parameter `{name}`: byte length {} not a multiple of 4", bytes.len()),
            ));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(blob.shape.clone(), data)?;
        if tensor.shape() != model.params().get(slot).value.shape() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "parameter `{name}`: shape {:?} does not match model shape {:?}",
                    tensor.shape(),
                    model.params().get(slot).value.shape()
                ),
            ));
        }
        model.params_mut().get_mut(slot).value = tensor;
    }
    Ok((model, file.experiment_id))
}

pub fn save_checkpoint(path: &Path, model: &TempoModel<f32>, experiment_id: u8) -> Result<()> {
    let text = checkpoint_to_string(model, experiment_id)?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TempoModel<f32>, u8)> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    checkpoint_from_str(&text)
}
