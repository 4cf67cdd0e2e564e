//! Named parameter storage and the `DGHP1` checkpoint format.
//!
//! Checkpoint layout (little-endian):
//! `"DGHP"`, u32 metadata length, metadata JSON, u32 array count, then per
//! array: u32 name length, UTF-8 name, u32 rank, u32 dims..., f64 data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DGHP";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "param {name} shape mismatch"
        );
        assert!(!self.by_name.contains_key(&name), "duplicate param {name}");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            shape: shape.to_vec(),
            data,
        });
        id
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let n = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    /// Uniform in `±sqrt(1/fan_in)`.
    pub fn uniform_fan_in(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, shape, data)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Copies values from `other` for every parameter present in both stores.
    pub fn load_matching(&mut self, other: &ParamStore) -> Result<usize> {
        let mut n = 0;
        for p in &mut self.params {
            if let Ok(id) = other.id(&p.name) {
                let src = other.get(id);
                if src.shape != p.shape {
                    return Err(NnError::Shape(format!(
                        "param {}: checkpoint shape {:?}, model shape {:?}",
                        p.name, src.shape, p.shape
                    )));
                }
                p.data.clone_from(&src.data);
                n += 1;
            }
        }
        Ok(n)
    }
}

/// Metadata stored alongside checkpoint arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub seed: u64,
    pub step: u64,
    pub spec: serde_json::Value,
}

pub fn encode_checkpoint(meta: &CheckpointMeta, store: &ParamStore) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointMeta, ParamStore)> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| NnError::Checkpoint("unexpected end of data".into()))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let json_len = u32_at(take(4)?);
    let meta: CheckpointMeta = serde_json::from_slice(take(json_len)?)?;
    let count = u32_at(take(4)?);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = u32_at(take(4)?);
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = u32_at(take(4)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32_at(take(4)?));
        }
        let n: usize = shape.iter().product();
        let raw = take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if store.id(&name).is_ok() {
            return Err(NnError::Checkpoint(format!("duplicate parameter {name}")));
        }
        store.insert(name, &shape, data);
    }
    if pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok((meta, store))
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, store: &ParamStore) -> Result<()> {
    dgh_core::io::write_bytes(path, &encode_checkpoint(meta, store)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, ParamStore)> {
    decode_checkpoint(&dgh_core::io::read_bytes(path)?)
}
