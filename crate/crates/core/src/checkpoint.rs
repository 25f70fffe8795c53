//! Versioned checkpoint container.
//!
//! A checkpoint is a safetensors file. Tensor keys are namespaced:
//!
//! - `param.<component>.<name>` and `buffer.<component>.<name>`: model state,
//! - `optim.<component>.<name>.m|v` and `optim.<component>.step`: optimizer state,
//! - `stats.*`: moving feature statistics.
//!
//! The safetensors header metadata has a single `isgan` entry: a JSON object
//! with `format`, `version`, `stage`, `epoch`, `config` (the resolved run
//! configuration) and `notes`. One entry keeps the header bytes deterministic.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const FORMAT: &str = "isgan-checkpoint";
pub const VERSION: u32 = 2;
const META_KEY: &str = "isgan";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub stage: u8,
    /// Number of completed epochs within `stage`.
    pub epoch: usize,
    pub config: serde_json::Value,
    /// Free-form annotations, e.g. the reason for a diagnostic checkpoint.
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Self { meta, tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, key: impl Into<String>, t: Tensor) -> Result<()> {
        let key = key.into();
        if self.tensors.insert(key.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate key `{key}`")));
        }
        Ok(())
    }

    pub fn extend(&mut self, items: impl IntoIterator<Item = (String, Tensor)>) -> Result<()> {
        items.into_iter().try_for_each(|(k, t)| self.insert(k, t))
    }

    pub fn get(&self, key: &str) -> Option<Tensor> {
        self.tensors.get(key).cloned()
    }

    /// Tensors whose key starts with `prefix.`, with the prefix removed.
    pub fn with_prefix(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let p = format!("{prefix}.");
        self.tensors
            .iter()
            .filter_map(|(k, t)| k.strip_prefix(&p).map(|s| (s.to_string(), t.clone())))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::json!({
            "format": FORMAT,
            "version": VERSION,
            "stage": self.meta.stage,
            "epoch": self.meta.epoch,
            "config": self.meta.config,
            "notes": self.meta.notes,
        });
        let info = HashMap::from([(META_KEY.to_string(), serde_json::to_string(&header)?)]);
        let contiguous: Vec<(String, Tensor)> = self
            .tensors
            .iter()
            .map(|(k, t)| Ok((k.clone(), t.contiguous()?)))
            .collect::<Result<_>>()?;
        safetensors::serialize(contiguous.iter().map(|(k, t)| (k.as_str(), t)), Some(info))
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) = safetensors::SafeTensors::read_metadata(bytes)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let text = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY))
            .ok_or_else(|| Error::Checkpoint("not an isgan checkpoint".into()))?;
        let info: serde_json::Value = serde_json::from_str(text)?;
        if info["format"] != FORMAT {
            return Err(Error::Checkpoint("not an isgan checkpoint".into()));
        }
        if info["version"] != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", info["version"])));
        }
        let meta = CheckpointMeta {
            stage: field(&info, "stage")?,
            epoch: field(&info, "epoch")?,
            config: info["config"].clone(),
            notes: field(&info, "notes")?,
        };
        let tensors = candle_core::safetensors::load_buffer(bytes, &Device::Cpu)?
            .into_iter()
            .collect();
        Ok(Self { meta, tensors })
    }

    /// Atomic write (temp file then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn field<T: serde::de::DeserializeOwned>(info: &serde_json::Value, k: &str) -> Result<T> {
    serde_json::from_value(info[k].clone()).map_err(|_| Error::Checkpoint(format!("bad or missing `{k}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::DType;

    #[test]
    fn bit_exact_round_trip() {
        let mut c = Checkpoint::new(CheckpointMeta {
            stage: 2,
            epoch: 3,
            config: serde_json::json!({"seed": 7}),
            notes: BTreeMap::new(),
        });
        let a = Tensor::new(&[[0.1f32, -3.5e-20], [f32::MAX, 1.0 / 3.0]], &Device::Cpu).unwrap();
        let b = Tensor::new(&[std::f64::consts::PI], &Device::Cpu).unwrap();
        c.insert("param.E_R.w", a.clone()).unwrap();
        c.insert("optim.G.step", b.clone()).unwrap();
        assert!(c.insert("optim.G.step", b).is_err());
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("x/epoch3.ckpt");
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.meta, c.meta);
        let ra = back.get("param.E_R.w").unwrap();
        assert_eq!(ra.dtype(), DType::F32);
        assert_eq!(ra.to_vec2::<f32>().unwrap(), a.to_vec2::<f32>().unwrap());
        assert_eq!(back.with_prefix("param").len(), 1);
        assert!(back.to_bytes().unwrap() == c.to_bytes().unwrap());
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }
}
