//! Named-tensor container used for model checkpoints and example sets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes   b"ONSETNT\0"
//! version   u32       currently 1
//! length    u64       byte length of the manifest
//! manifest  JSON      {"meta": <any>, "tensors": [{"name", "shape", "offset"}]}
//! payload   f64 LE    tensors back to back; `offset` is the byte offset of
//!                     each tensor from the start of the payload
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ONSETNT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    tensors: Vec<ManifestEntry>,
}

/// An ordered collection of named tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensors {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl NamedTensors {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn take(&mut self, name: &str) -> Result<Tensor> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))?;
        Ok(self.tensors.remove(pos).1)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let entries: Vec<ManifestEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = ManifestEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(20 + manifest.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a named-tensor container".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let manifest_end = 20usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[20..manifest_end])?;
        let payload = &bytes[manifest_end..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > payload.len() {
                return Err(Error::Format(format!(
                    "tensor {:?} runs past the payload",
                    e.name
                )));
            }
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((e.name, Tensor::new(e.shape, data)?));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
