//! Importing encoder weights produced elsewhere.
//!
//! A weight manifest is a JSON file:
//!
//! ```json
//! {
//!   "format": "supcon-weights",
//!   "version": 1,
//!   "config": { "input_size": 48, "patch_size": 8, "depth": 4, "width": 64, "heads": 4, "mlp_ratio": 4 },
//!   "blob": "weights.bin",
//!   "tensors": [
//!     { "name": "patch_embed.weight", "shape": [192, 64], "dtype": "f32", "offset": 0 }
//!   ]
//! }
//! ```
//!
//! `blob` is resolved relative to the manifest. Each tensor is stored
//! little-endian, row-major, starting at byte `offset`. Tensor names and
//! shapes must match the encoder layout (see
//! [`ParamStore::specs`](supcon_core::model::ParamStore::specs)); converters
//! from other checkpoint formats are expected to rename tensors to the
//! layout names. Extra tensors in the manifest are ignored with a warning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use supcon_core::model::{EncoderConfig, Parameterized, VitEncoder};

use crate::error::{Error, Result};
use crate::io::{read_bytes, read_json, write_bytes, write_json};

pub const WEIGHTS_FORMAT: &str = "supcon-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format: String,
    pub version: u32,
    pub config: EncoderConfig,
    pub blob: String,
    pub tensors: Vec<WeightTensor>,
}

fn mismatch(path: &Path, reason: impl Into<String>) -> Error {
    Error::ManifestMismatch { path: path.to_path_buf(), reason: reason.into() }
}

/// Loads an encoder from a weight manifest. `expected` is the encoder
/// config of the run; a manifest for a different architecture is rejected.
pub fn import_encoder(path: &Path, expected: &EncoderConfig) -> Result<VitEncoder> {
    if !path.exists() {
        return Err(Error::missing(path, "weight manifest not found"));
    }
    let manifest: WeightManifest = read_json(path)?;
    if manifest.format != WEIGHTS_FORMAT || manifest.version != WEIGHTS_VERSION {
        return Err(mismatch(path, format!("unsupported format {} v{}", manifest.format, manifest.version)));
    }
    if manifest.config != *expected {
        return Err(mismatch(path, format!("weights are for {:?}, run uses {:?}", manifest.config, expected)));
    }
    let blob_path = path.with_file_name(&manifest.blob);
    let blob = read_bytes(&blob_path)?;
    let mut by_name: BTreeMap<&str, &WeightTensor> = manifest.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut problem = None;
    let encoder = VitEncoder::from_named_tensors(manifest.config, |name, shape| {
        let t = by_name.remove(name)?;
        if t.shape != shape {
            problem.get_or_insert_with(|| format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape));
            return None;
        }
        let n: usize = shape.iter().product();
        let end = t.offset.checked_add(n * t.dtype.size())?;
        let Some(bytes) = blob.get(t.offset..end) else {
            problem.get_or_insert_with(|| format!("tensor `{name}` runs past the end of the blob"));
            return None;
        };
        Some(match t.dtype {
            Dtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            Dtype::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        })
    });
    let encoder = match (encoder, problem) {
        (Ok(e), _) => e,
        (Err(_), Some(p)) => return Err(mismatch(path, p)),
        (Err(e), None) => return Err(mismatch(path, e.to_string())),
    };
    for name in by_name.keys() {
        log::warn!("{}: ignoring unused tensor `{name}`", path.display());
    }
    Ok(encoder)
}

/// Writes an encoder as a weight manifest plus blob (`<stem>.bin` next to
/// `path`).
pub fn export_encoder(path: &Path, encoder: &VitEncoder, dtype: Dtype) -> Result<()> {
    let params = encoder.params();
    let mut blob = Vec::with_capacity(params.len() * dtype.size());
    let mut tensors = Vec::new();
    for spec in params.specs() {
        tensors.push(WeightTensor { name: spec.name.clone(), shape: spec.shape.clone(), dtype, offset: blob.len() });
        for &v in &params.data()[spec.range()] {
            match dtype {
                Dtype::F32 => blob.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => blob.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    let blob_path = path.with_extension("bin");
    write_bytes(&blob_path, &blob)?;
    let manifest = WeightManifest {
        format: WEIGHTS_FORMAT.into(),
        version: WEIGHTS_VERSION,
        config: *encoder.config(),
        blob: blob_path.file_name().expect("file name").to_string_lossy().into_owned(),
        tensors,
    };
    write_json(path, &manifest)
}
