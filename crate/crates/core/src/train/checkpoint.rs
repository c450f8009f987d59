//! Checkpoint directories: `manifest.json` plus `tensors.bin` (little-endian
//! f32, tensors back to back in manifest order).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::encode::LabelVocab;
use crate::model::{ModelConfig, SaeconModel};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TENSORS: &str = "tensors.bin";
const FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into `tensors.bin`.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub labels: LabelVocab,
    pub epoch: usize,
    /// Dev score of the saved epoch, when known.
    pub dev_metric: Option<f64>,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    /// Free-form provenance such as the vector source.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(model: &SaeconModel<f32>, labels: LabelVocab) -> Self {
        Self {
            format: FORMAT,
            model: model.config.clone(),
            train: None,
            labels,
            epoch: 0,
            dev_metric: None,
            seed: model.store.seed(),
            tensors: Vec::new(),
            extra: BTreeMap::new(),
        }
    }
}

/// Writes `model` into `dir`. Tensor entries of `manifest` are rebuilt from
/// the store.
pub fn save_checkpoint(model: &SaeconModel<f32>, manifest: &Manifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = manifest.clone();
    manifest.format = FORMAT;
    manifest.model = model.config.clone();
    manifest.tensors.clear();
    let mut bytes = Vec::with_capacity(model.store.num_scalars() * 4);
    for (_, p) in model.store.iter() {
        manifest.tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape(),
            offset: bytes.len() as u64,
        });
        for v in p.value.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tpath = dir.join(TENSORS);
    fs::write(&tpath, &bytes).map_err(|e| Error::io(&tpath, e))?;
    let mpath = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {} (expected {FORMAT})",
            manifest.format
        )));
    }
    Ok(manifest)
}

/// Rebuilds the model described by the manifest and fills its parameters.
/// Fails on the first name or shape that differs from the rebuilt model, and
/// on a payload of the wrong length.
pub fn load_checkpoint(dir: &Path) -> Result<(SaeconModel<f32>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut model = SaeconModel::<f32>::new(manifest.model.clone(), manifest.seed)?;
    let tpath = dir.join(TENSORS);
    let bytes = fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;

    let expected: Vec<(String, [usize; 2])> = model.store.iter().map(|(_, p)| (p.name.clone(), p.shape())).collect();
    for (i, (name, shape)) in expected.iter().enumerate() {
        let Some(entry) = manifest.tensors.get(i) else {
            return Err(Error::Checkpoint(format!("missing tensor {name} at position {i}")));
        };
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: expected {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
    }
    if manifest.tensors.len() > expected.len() {
        let extra = &manifest.tensors[expected.len()];
        return Err(Error::Checkpoint(format!("unexpected tensor {}", extra.name)));
    }
    let needed = model.store.num_scalars() * 4;
    if bytes.len() != needed {
        return Err(Error::Checkpoint(format!(
            "{} holds {} bytes, expected {needed}",
            tpath.display(),
            bytes.len()
        )));
    }

    let ids: Vec<_> = model.store.ids().collect();
    for (id, entry) in ids.into_iter().zip(&manifest.tensors) {
        let start = entry.offset as usize;
        let len = entry.shape[0] * entry.shape[1] * 4;
        let chunk = bytes
            .get(start..start + len)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} lies outside the payload", entry.name)))?;
        let p = model.store.get_mut(id);
        for (dst, b) in p.value.iter_mut().zip(chunk.chunks_exact(4)) {
            *dst = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok((model, manifest))
}
