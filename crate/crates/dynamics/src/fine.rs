//! Temporal flow refinement over the two previous hair states.

use std::path::Path;

use dgh_core::{FeatureVolume, GridSpec, Groom, HeadPose, Point3, Vector3};
use dgh_nn::mlp::MlpSpec;
use dgh_nn::volume_ops::trilinear_sample;
use dgh_nn::{
    concat_cols, concat_flat, CheckpointMeta, CrossAttention, Mlp, ParamStore, Tape, Unet3d, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{FineConfig, POSE_WIDTH};
use crate::error::{DynError, Result};
use crate::features::{
    encoding_rows, hair_volume, point_rows, pose_rows, rows_to_vectors, vector_rows, volume_var,
};

pub const FINE_KIND: &str = "fine";

/// Hair encoder (shared by both past frames), cross-attention and the flow MLP.
#[derive(Clone, Debug)]
pub struct FineModel {
    pub config: FineConfig,
    pub grid: GridSpec,
    pub store: ParamStore,
    e_hair: Unet3d,
    attention: Option<CrossAttention>,
    mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FineMeta {
    config: FineConfig,
    grid: GridSpec,
}

impl FineModel {
    pub fn new(config: FineConfig, grid: GridSpec, seed: u64) -> Result<Self> {
        config.validate(&grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let e_hair = Unet3d::new(&mut store, "e_hair", config.encoder.clone(), &mut rng)?;
        let attention = config
            .use_attention
            .then(|| CrossAttention::new(&mut store, "attn", config.attention.clone(), &mut rng));
        let spec = MlpSpec::new(config.mlp_widths()).with_input_skip_on_last();
        let mlp = Mlp::new(&mut store, "mlp", spec, &mut rng)?;
        Ok(Self {
            config,
            grid,
            store,
            e_hair,
            attention,
            mlp,
        })
    }

    pub fn hair_volume(&self, groom: &Groom) -> Result<FeatureVolume> {
        hair_volume(
            groom.points(),
            &self.grid,
            self.config.hair_truncation_voxels,
        )
    }

    /// Fused flow features `[C, D, H, W]`: the encoded previous frame, and
    /// with attention, tokens of frame t−2 attending to tokens of frame t−1.
    pub(crate) fn flow_features<'t>(
        &self,
        tape: &'t Tape,
        prev: &FeatureVolume,
        prev2: &FeatureVolume,
    ) -> Result<Var<'t>> {
        let v1 = self
            .e_hair
            .forward(tape, &self.store, volume_var(tape, prev))?;
        let Some(attn) = &self.attention else {
            return Ok(v1);
        };
        let v2 = self
            .e_hair
            .forward(tape, &self.store, volume_var(tape, prev2))?;
        let fused = attn.forward(tape, &self.store, v2, v1, v1)?;
        let mut shape = v1.shape();
        shape[0] *= 2;
        Ok(concat_flat(&[v1, fused], shape)?)
    }

    /// Flow `[N, 3]` in meters for `points` of frame t−1.
    pub(crate) fn flow<'t>(
        &self,
        tape: &'t Tape,
        features: Var<'t>,
        points: &[Point3<f64>],
        pose: &HeadPose,
        flow_prev: &[Vector3<f64>],
    ) -> Result<Var<'t>> {
        let n = points.len();
        let s = self.config.flow_scale;
        let p = tape.constant(&[n, 3], point_rows(points));
        let f = trilinear_sample(features, &self.grid, p)?;
        let h = tape.constant(&[n, POSE_WIDTH], pose_rows(pose, n));
        let prior = if self.config.use_motion {
            vector_rows(flow_prev, 1.0 / s)
        } else {
            vec![0.0; 3 * n]
        };
        let prior = tape.constant(&[n, 3], prior);
        let enc_w = 6 * self.config.frequencies;
        let enc = tape.constant(
            &[n, enc_w],
            encoding_rows(&self.grid, points, self.config.frequencies),
        );
        let input = concat_cols(&[f, h, prior, enc])?;
        Ok(self.mlp.forward(tape, &self.store, input)?.scale(s))
    }

    /// Runs the stage from precomputed hair volumes of frames t−1 and t−2.
    pub fn step_with_volumes(
        &self,
        prev: &Groom,
        vol_prev: &FeatureVolume,
        vol_prev2: &FeatureVolume,
        pose: &HeadPose,
        flow_prev: &[Vector3<f64>],
    ) -> Result<(Groom, Vec<Vector3<f64>>)> {
        if flow_prev.len() != prev.point_count() {
            return Err(DynError::Topology(format!(
                "previous flow has {} vectors for {} points",
                flow_prev.len(),
                prev.point_count()
            )));
        }
        let tape = Tape::new();
        let features = self.flow_features(&tape, vol_prev, vol_prev2)?;
        let flow = rows_to_vectors(
            &self
                .flow(&tape, features, prev.points(), pose, flow_prev)?
                .value(),
        );
        let points = prev
            .points()
            .iter()
            .zip(&flow)
            .map(|(p, d)| p + d)
            .collect();
        Ok((prev.with_points(points)?, flow))
    }

    pub fn save(&self, path: &Path, seed: u64, step: u64) -> Result<()> {
        dgh_nn::save_checkpoint(path, &self.checkpoint_meta(seed, step)?, &self.store)?;
        Ok(())
    }

    pub fn checkpoint_meta(&self, seed: u64, step: u64) -> Result<CheckpointMeta> {
        Ok(CheckpointMeta {
            kind: FINE_KIND.into(),
            seed,
            step,
            spec: serde_json::to_value(FineMeta {
                config: self.config.clone(),
                grid: self.grid,
            })?,
        })
    }

    pub fn from_checkpoint(meta: &CheckpointMeta, saved: &ParamStore) -> Result<Self> {
        if meta.kind != FINE_KIND {
            return Err(DynError::Checkpoint(format!(
                "expected a {FINE_KIND} checkpoint, got {}",
                meta.kind
            )));
        }
        let m: FineMeta = serde_json::from_value(meta.spec.clone())?;
        let mut model = Self::new(m.config, m.grid, meta.seed)?;
        let loaded = model.store.load_matching(saved)?;
        if loaded != model.store.len() || saved.len() != loaded {
            return Err(DynError::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {}",
                saved.len(),
                model.store.len()
            )));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, store) = dgh_nn::load_checkpoint(path)?;
        Self::from_checkpoint(&meta, &store)
    }
}

/// Predicts the flow from frame t−1 to t and applies it.
pub fn fine_forward(
    model: &FineModel,
    prev: &Groom,
    prev2: &Groom,
    pose: &HeadPose,
    flow_prev: &[Vector3<f64>],
) -> Result<(Groom, Vec<Vector3<f64>>)> {
    if !prev.same_topology(prev2) {
        return Err(DynError::Topology(
            "frames t−1 and t−2 differ in topology".into(),
        ));
    }
    let v1 = model.hair_volume(prev)?;
    let v2 = if model.config.use_attention {
        model.hair_volume(prev2)?
    } else {
        v1.clone()
    };
    model.step_with_volumes(prev, &v1, &v2, pose, flow_prev)
}
