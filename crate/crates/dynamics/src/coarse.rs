//! Pose-driven, time-independent hair deformation.

use std::path::Path;

use dgh_core::{rigid_transform, FeatureVolume, GridSpec, Groom, HeadPose, Point3, Vector3};
use dgh_nn::mlp::MlpSpec;
use dgh_nn::volume_ops::trilinear_sample;
use dgh_nn::{concat_cols, CheckpointMeta, Mlp, ParamStore, Tape, Unet3d, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CoarseConfig, POSE_WIDTH};
use crate::error::{DynError, Result};
use crate::features::{
    check_grid, encoding_rows, hair_volume, point_rows, pose_rows, rows_to_vectors, volume_var,
};

pub const COARSE_KIND: &str = "coarse";
const REFERENCE_PARAM: &str = "reference.points";

/// Pose and hair encoders plus the displacement MLP, trained for one groom.
///
/// The hair volume is always built from `reference` (the groom the model
/// was trained on), so the displacement of a query point does not depend on
/// which other points are queried with it.
#[derive(Clone, Debug)]
pub struct CoarseModel {
    pub config: CoarseConfig,
    pub grid: GridSpec,
    pub reference: Groom,
    pub store: ParamStore,
    e_pose: Unet3d,
    e_hair: Unet3d,
    mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoarseMeta {
    config: CoarseConfig,
    grid: GridSpec,
    vertices_per_strand: usize,
}

impl CoarseModel {
    pub fn new(config: CoarseConfig, grid: GridSpec, reference: Groom, seed: u64) -> Result<Self> {
        config.validate(&grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let e_pose = Unet3d::new(&mut store, "e_pose", config.encoder.clone(), &mut rng)?;
        let e_hair = Unet3d::new(&mut store, "e_hair", config.encoder.clone(), &mut rng)?;
        let spec = MlpSpec::new(config.mlp_widths()).with_input_skip_on_last();
        let mlp = Mlp::new(&mut store, "mlp", spec, &mut rng)?;
        Ok(Self {
            config,
            grid,
            reference,
            store,
            e_pose,
            e_hair,
            mlp,
        })
    }

    /// Distance volume of the reference groom rigidly moved to `pose`.
    pub fn rigid_hair_volume(&self, pose: &HeadPose) -> Result<FeatureVolume> {
        let rigid = rigid_transform(&self.reference, pose);
        hair_volume(
            rigid.points(),
            &self.grid,
            self.config.hair_truncation_voxels,
        )
    }

    /// Scaled displacements `[N, 3]` for rigidly placed `points`.
    pub(crate) fn displacement<'t>(
        &self,
        tape: &'t Tape,
        body_sdf: &FeatureVolume,
        hair: &FeatureVolume,
        points: &[Point3<f64>],
        pose: &HeadPose,
    ) -> Result<Var<'t>> {
        let n = points.len();
        let fp = self
            .e_pose
            .forward(tape, &self.store, volume_var(tape, body_sdf))?;
        let fh = self
            .e_hair
            .forward(tape, &self.store, volume_var(tape, hair))?;
        let p = tape.constant(&[n, 3], point_rows(points));
        let sp = trilinear_sample(fp, &self.grid, p)?;
        let sh = trilinear_sample(fh, &self.grid, p)?;
        let enc_w = 6 * self.config.frequencies;
        let enc = tape.constant(
            &[n, enc_w],
            encoding_rows(&self.grid, points, self.config.frequencies),
        );
        let h = tape.constant(&[n, POSE_WIDTH], pose_rows(pose, n));
        let input = concat_cols(&[sp, sh, enc, h])?;
        Ok(self
            .mlp
            .forward(tape, &self.store, input)?
            .scale(self.config.displacement_scale))
    }

    pub fn save(&self, path: &Path, seed: u64, step: u64) -> Result<()> {
        let (meta, store) = self.checkpoint(seed, step)?;
        dgh_nn::save_checkpoint(path, &meta, &store)?;
        Ok(())
    }

    pub fn checkpoint(&self, seed: u64, step: u64) -> Result<(CheckpointMeta, ParamStore)> {
        let meta = CheckpointMeta {
            kind: COARSE_KIND.into(),
            seed,
            step,
            spec: serde_json::to_value(CoarseMeta {
                config: self.config.clone(),
                grid: self.grid,
                vertices_per_strand: self.reference.vertices_per_strand(),
            })?,
        };
        let mut store = self.store.clone();
        store.insert(
            REFERENCE_PARAM,
            &[self.reference.point_count(), 3],
            point_rows(self.reference.points()),
        );
        Ok((meta, store))
    }

    pub fn from_checkpoint(meta: &CheckpointMeta, saved: &ParamStore) -> Result<Self> {
        if meta.kind != COARSE_KIND {
            return Err(DynError::Checkpoint(format!(
                "expected a {COARSE_KIND} checkpoint, got {}",
                meta.kind
            )));
        }
        let m: CoarseMeta = serde_json::from_value(meta.spec.clone())?;
        let refp = saved.get(saved.id(REFERENCE_PARAM)?);
        let points = refp
            .data
            .chunks_exact(3)
            .map(|r| Point3::new(r[0], r[1], r[2]))
            .collect();
        let reference = Groom::from_points(m.vertices_per_strand, points)?;
        let mut model = Self::new(m.config, m.grid, reference, meta.seed)?;
        let loaded = model.store.load_matching(saved)?;
        if loaded != model.store.len() || saved.len() != loaded + 1 {
            return Err(DynError::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {} plus the reference groom",
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

/// Rigidly places `groom_can` at `pose` and adds the learned displacement.
/// Returns the deformed groom and the per-point displacements.
pub fn coarse_forward(
    model: &CoarseModel,
    groom_can: &Groom,
    pose: &HeadPose,
    body_sdf: &FeatureVolume,
) -> Result<(Groom, Vec<Vector3<f64>>)> {
    check_grid(body_sdf, &model.grid, "body sdf")?;
    let hair = model.rigid_hair_volume(pose)?;
    let rigid = rigid_transform(groom_can, pose);
    let tape = Tape::new();
    let d = model.displacement(&tape, body_sdf, &hair, rigid.points(), pose)?;
    let disp = rows_to_vectors(&d.value());
    let points = rigid
        .points()
        .iter()
        .zip(&disp)
        .map(|(p, d)| p + d)
        .collect();
    Ok((rigid.with_points(points)?, disp))
}
