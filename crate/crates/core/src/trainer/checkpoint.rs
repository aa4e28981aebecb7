//! Binary checkpoint format.
//!
//! ```text
//! magic "LQACKPT\0" | u32 version | u64 manifest length | manifest JSON
//! then per array: u32 name length | name | u32 rank | u64 dims... | f32 data
//! ```
//! All integers and floats are little-endian. Parameters are rounded to f32
//! when captured, so a save/load round trip is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::params::{EncoderConfig, ParamStore, Params, PARAM_NAMES};

const MAGIC: &[u8; 8] = b"LQACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Validation snapshot stored with a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub answer_f1: f64,
    pub answer_em: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub step: usize,
    pub seed: u64,
    pub metrics: Option<CheckpointMetrics>,
    pub encoder: EncoderConfig,
    pub model: ModelConfig,
    pub vocab: Vocab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: Params,
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

impl Checkpoint {
    pub fn capture(model: &Model, step: usize, seed: u64, metrics: Option<CheckpointMetrics>, config_hash: String) -> Self {
        let mut params = model.store.values.clone();
        for (_, a) in params.arrays_mut() {
            for x in &mut a.data {
                *x = *x as f32 as f64;
            }
        }
        Checkpoint {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                config_hash,
                step,
                seed,
                metrics,
                encoder: model.store.config.clone(),
                model: model.config.clone(),
                vocab: model.vocab.clone(),
            },
            params,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut store = ParamStore::zeros(&self.manifest.encoder, self.manifest.vocab.len())?;
        if !store.values.same_shapes(&self.params) {
            return Err(Error::Checkpoint("array shapes disagree with the manifest".into()));
        }
        store.values = self.params.clone();
        Ok(Model {
            vocab: self.manifest.vocab.clone(),
            config: self.manifest.model.clone(),
            store,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::with_capacity(manifest.len() + 4 * 100_000);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (name, a) in self.params.arrays() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &a.data {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let len = r.u64()? as usize;
        let manifest: Manifest = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        let mut params = Params::zeros(&manifest.encoder, manifest.vocab.len());
        for (expected, a) in PARAM_NAMES.iter().zip(params.arrays_mut()) {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::Checkpoint("array name is not utf-8".into()))?;
            if name != *expected {
                return Err(Error::Checkpoint(format!("expected array `{expected}`, found `{name}`")));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let array = a.1;
            if shape != array.shape {
                return Err(Error::Checkpoint(format!(
                    "array `{name}` has shape {shape:?}, manifest implies {:?}",
                    array.shape
                )));
            }
            for x in &mut array.data {
                let b = r.take(4)?;
                *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { manifest, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint("truncated file".into()));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}
