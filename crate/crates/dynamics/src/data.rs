//! Body distance-field cache and on-disk frame sequences.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use dgh_core::io::{
    decode_volume, encode_volume, read_groom, read_json, read_volume, write_bytes, write_groom,
    write_json,
};
use dgh_core::{FeatureVolume, FrameRecord, Groom, HeadPose, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{DynError, Result};

/// Body distance fields keyed by pose digest mixed with a scene salt, kept
/// in memory and optionally mirrored to `dir/<key>.dghv`.
///
/// Entries are stored at file precision even in memory, so a cold and a
/// warm cache return identical volumes.
#[derive(Debug, Default)]
pub struct SdfCache {
    dir: Option<PathBuf>,
    salt: u64,
    memory: HashMap<u64, FeatureVolume>,
}

impl SdfCache {
    pub fn in_memory(salt: u64) -> Self {
        Self {
            salt,
            ..Self::default()
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>, salt: u64) -> Self {
        Self {
            dir: Some(dir.into()),
            salt,
            memory: HashMap::new(),
        }
    }

    pub fn key(&self, pose: &HeadPose) -> u64 {
        let mut h = self.salt ^ 0x9e37_79b9_7f4a_7c15;
        for b in pose.digest().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    pub fn get_or_compute<E>(
        &mut self,
        pose: &HeadPose,
        compute: impl FnOnce(&HeadPose) -> std::result::Result<FeatureVolume, E>,
    ) -> Result<FeatureVolume>
    where
        DynError: From<E>,
    {
        let key = self.key(pose);
        if let Some(v) = self.memory.get(&key) {
            return Ok(v.clone());
        }
        let file = self
            .dir
            .as_ref()
            .map(|d| d.join(format!("{key:016x}.dghv")));
        let vol = match &file {
            Some(f) if f.exists() => read_volume(f)?,
            _ => {
                let bytes = encode_volume(&compute(pose)?);
                if let Some(f) = &file {
                    write_bytes(f, &bytes)?;
                }
                decode_volume(&bytes)?
            }
        };
        self.memory.insert(key, vol.clone());
        Ok(vol)
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }
}

/// `manifest.json` of a sequence directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub frame_rate: f64,
    pub frames: Vec<ManifestFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    pub index: usize,
    pub groom: String,
    pub pose: HeadPose,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `frame_NNNN.dghs` files and a manifest. Flows are not stored; they
/// are recomputed from consecutive frames on read.
pub fn write_sequence(dir: &Path, frames: &[FrameRecord], frame_rate: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(dgh_core::CoreError::from)?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, rec) in frames.iter().enumerate() {
        let name = format!("frame_{i:04}.dghs");
        write_groom(&dir.join(&name), &rec.groom)?;
        entries.push(ManifestFrame {
            index: i,
            groom: name,
            pose: rec.pose,
        });
    }
    let manifest = SequenceManifest {
        frame_rate,
        frames: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

pub fn read_sequence(dir: &Path) -> Result<(SequenceManifest, Vec<FrameRecord>)> {
    let manifest: SequenceManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut out: Vec<FrameRecord> = Vec::with_capacity(manifest.frames.len());
    for (i, f) in manifest.frames.iter().enumerate() {
        if f.index != i {
            return Err(DynError::Shape(format!(
                "manifest entry {i} has index {}",
                f.index
            )));
        }
        let groom: Groom = read_groom(&dir.join(&f.groom))?;
        let flow = match out.last() {
            Some(prev) => FrameRecord::flow_between(&prev.groom, &groom).map_err(|_| {
                DynError::Topology(format!("frame {i} differs from frame {}", i - 1))
            })?,
            None => vec![Vector3::zeros(); groom.point_count()],
        };
        out.push(FrameRecord::new(f.pose, groom, flow)?);
    }
    Ok((manifest, out))
}
