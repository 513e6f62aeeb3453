//! Named network parameters and the `LFDW1` checkpoint container.
//!
//! Layout: the magic `LFDW1`, a `u32` tensor count, then per tensor a `u32`
//! name length, the UTF-8 name, a `u32` rank, `u64` dims, a dtype byte
//! (`0` = f64, `1` = f32) and the little-endian payload. Integers are
//! little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use lfdepth_autodiff::{Gradients, Graph, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, io_err, Error, Result};

const MAGIC: &[u8; 5] = b"LFDW1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Moves every tensor of `other` into `self`, replacing equal names.
    pub fn extend(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    /// Adds He-initialised weights and zero biases for each `(name, shape)`.
    /// Names ending in `/b` are biases; weights take fan-in from `shape[1..]`.
    pub fn init_from_specs<R: Rng + ?Sized>(&mut self, specs: &[(String, Vec<usize>)], rng: &mut R) {
        for (name, shape) in specs {
            let t = if name.ends_with("/b") {
                Tensor::zeros(shape.clone())
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / (1.0 + 0.01) / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                let n: usize = shape.iter().product();
                Tensor::new(shape.clone(), (0..n).map(|_| dist.sample(rng)).collect()).expect("spec shape")
            };
            self.insert(name.clone(), t);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.push(0);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != MAGIC {
            return Err("not an LFDW1 checkpoint".into());
        }
        let count = r.u32()?;
        let mut store = Self::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| "tensor name is not UTF-8".to_string())?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = match r.take(1)?[0] {
                0 => r
                    .take(n * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                1 => r
                    .take(n * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect(),
                other => return Err(format!("unknown dtype {other} for {name}")),
            };
            let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
            if store.tensors.insert(name.clone(), t).is_some() {
                return Err(format!("duplicate tensor {name}"));
            }
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::Format {
            path: path.to_path_buf(),
            msg,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parameters of a store placed on a graph, created on first use.
pub struct Binding<'a> {
    store: &'a ParamStore,
    vars: BTreeMap<String, Var>,
    trainable: bool,
}

impl<'a> Binding<'a> {
    /// With `trainable` the parameters become gradient leaves.
    pub fn new(store: &'a ParamStore, trainable: bool) -> Self {
        Self {
            store,
            vars: BTreeMap::new(),
            trainable,
        }
    }

    pub fn var(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let t = self
            .store
            .get(name)
            .ok_or_else(|| invalid("parameters", format!("missing tensor {name}")))?
            .clone();
        let v = if self.trainable { g.leaf(t)? } else { g.constant(t)? };
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Graph handles of every parameter used so far, keyed by name.
    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    /// Gradients by parameter name; unused parameters are absent.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter_map(|(k, &v)| grads.get(v).map(|t| (k.clone(), t.clone())))
            .collect()
    }
}
