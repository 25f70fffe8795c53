use std::collections::BTreeMap;

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::ChaCha8Rng;

/// Named trainable variables and non-trainable buffers of one component.
#[derive(Default, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param(&self, name: &str) -> Option<&Var> {
        self.params.get(name)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(|v| v.elem_count()).sum()
    }

    /// SHA-256 over names, shapes and raw bytes of every parameter and buffer.
    pub fn digest(&self) -> Result<[u8; 32]> {
        let mut h = Sha256::new();
        for (kind, map) in [("p", &self.params), ("b", &self.buffers)] {
            for (name, var) in map {
                h.update(kind.as_bytes());
                h.update(name.as_bytes());
                for d in var.dims() {
                    h.update((*d as u64).to_le_bytes());
                }
                h.update(tensor_bytes(var.as_tensor())?);
            }
        }
        Ok(h.finalize().into())
    }

    /// Every parameter and buffer, keyed `param.<name>` / `buffer.<name>`.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(self.params.len() + self.buffers.len());
        for (k, v) in &self.params {
            out.push((format!("param.{k}"), v.as_tensor().clone()));
        }
        for (k, v) in &self.buffers {
            out.push((format!("buffer.{k}"), v.as_tensor().clone()));
        }
        out
    }

    /// Overwrites every variable from `lookup`; a missing or mis-shaped entry is an error.
    pub fn load_from(&self, mut lookup: impl FnMut(&str) -> Option<Tensor>) -> Result<()> {
        for (kind, map) in [("param", &self.params), ("buffer", &self.buffers)] {
            for (k, v) in map {
                let key = format!("{kind}.{k}");
                let t = lookup(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
                if t.dims() != v.dims() || t.dtype() != v.dtype() {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{key}` has shape {:?}/{:?}, expected {:?}/{:?}",
                        t.dims(),
                        t.dtype(),
                        v.dims(),
                        v.dtype()
                    )));
                }
                v.set(&t)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn tensor_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let flat = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F32 => flat
            .to_vec1::<f32>()?
            .into_iter()
            .flat_map(f32::to_le_bytes)
            .collect(),
        DType::F64 => flat
            .to_vec1::<f64>()?
            .into_iter()
            .flat_map(f64::to_le_bytes)
            .collect(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unsupported dtype {other:?}"
            )))
        }
    })
}

/// Parameter initialisation schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Normal { std: f64 },
    Uniform { bound: f64 },
    Const(f64),
}

/// Registers variables under a dotted prefix while drawing initial values
/// from a seeded stream.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    prefix: String,
    rng: &'a mut ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng, dtype: DType) -> Self {
        Builder {
            store,
            prefix: String::new(),
            rng,
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn sub(&mut self, name: &str) -> Builder<'_> {
        let prefix = self.path(name);
        Builder {
            store: &mut *self.store,
            prefix,
            rng: &mut *self.rng,
            dtype: self.dtype,
            device: self.device.clone(),
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn sample(&mut self, shape: &Shape, init: Init) -> Result<Tensor> {
        let n = shape.elem_count();
        let values: Vec<f64> = match init {
            Init::Normal { std } => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut *self.rng);
                    z * std
                })
                .collect(),
            Init::Uniform { bound } => (0..n)
                .map(|_| self.rng.random_range(-bound..bound))
                .collect(),
            Init::Const(c) => vec![c; n],
        };
        Ok(Tensor::from_vec(values, shape.clone(), &self.device)?.to_dtype(self.dtype)?)
    }

    pub fn param(&mut self, name: &str, shape: impl Into<Shape>, init: Init) -> Result<Var> {
        let shape = shape.into();
        let t = self.sample(&shape, init)?;
        let var = Var::from_tensor(&t)?;
        let key = self.path(name);
        if self.store.params.insert(key.clone(), var.clone()).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{key}`")));
        }
        Ok(var)
    }

    pub fn buffer(&mut self, name: &str, shape: impl Into<Shape>, init: Init) -> Result<Var> {
        let shape = shape.into();
        let t = self.sample(&shape, init)?;
        let var = Var::from_tensor(&t)?;
        let key = self.path(name);
        if self.store.buffers.insert(key.clone(), var.clone()).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate buffer `{key}`")));
        }
        Ok(var)
    }
}
