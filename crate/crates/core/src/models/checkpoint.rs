//! Checkpoint file: one JSON manifest line, a newline, then the parameters
//! as little-endian `f32` values in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InputDims, Model, ModelConfig, ModelKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob section.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model_kind: ModelKind,
    pub config: ModelConfig,
    pub dims: InputDims,
    pub params: Vec<ParamEntry>,
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut params = Vec::with_capacity(model.params.len());
    let mut blob = Vec::with_capacity(4 * model.params.numel());
    for p in model.params.iter() {
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            dtype: "f32".into(),
            offset: blob.len(),
        });
        for &v in p.value.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        model_kind: model.kind(),
        config: model.net.config.clone(),
        dims: model.net.dims,
        params,
    };
    let mut out = serde_json::to_vec(&manifest).map_err(|e| Error::json("checkpoint manifest", e))?;
    out.push(b'\n');
    out.extend_from_slice(&blob);
    Ok(out)
}

fn field(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("checkpoint manifest field `{path}`: {msg}"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Data("checkpoint: missing manifest line".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[..split]).map_err(|e| Error::json("checkpoint manifest", e))?;
    let blob = &bytes[split + 1..];
    if manifest.model_kind != manifest.config.model_kind {
        return Err(field("model_kind", "disagrees with config.model_kind"));
    }
    let mut model = Model::new(&manifest.config, manifest.dims, 0)?;
    if manifest.params.len() != model.params.len() {
        return Err(field(
            "params",
            format!("{} entries, architecture has {}", manifest.params.len(), model.params.len()),
        ));
    }
    for (i, entry) in manifest.params.iter().enumerate() {
        let id = model
            .params
            .id(&entry.name)
            .ok_or_else(|| field(&format!("params[{i}].name"), format!("unknown parameter `{}`", entry.name)))?;
        if entry.dtype != "f32" {
            return Err(field(&format!("params[{i}].dtype"), format!("unsupported `{}`", entry.dtype)));
        }
        if entry.shape != model.params.param(id).shape {
            return Err(field(
                &format!("params[{i}].shape"),
                format!("{:?}, expected {:?}", entry.shape, model.params.param(id).shape),
            ));
        }
        let n = model.params.value(id).data().len();
        let end = entry.offset.checked_add(4 * n).filter(|&e| e <= blob.len());
        let end = end.ok_or_else(|| field(&format!("params[{i}].offset"), "points past the end of the blob"))?;
        let values = model.params.value_mut(id).data_mut();
        for (v, chunk) in values.iter_mut().zip(blob[entry.offset..end].chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64;
        }
        if !model.params.value(id).is_finite() {
            return Err(Error::Numeric(format!("checkpoint parameter `{}`", entry.name)));
        }
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &to_bytes(model)?)
}

pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
