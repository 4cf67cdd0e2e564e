//! Sequence inference: coarse at frame 0, then recurrent fine steps.

use dgh_core::{FeatureVolume, FrameRecord, Groom, MotionSequence, Vector3};
use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_forward, CoarseModel};
use crate::error::{DynError, Result};
use crate::fine::FineModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferOptions {
    /// Re-voxelize predicted hair every `voxelize_stride` frames and reuse
    /// the last volume in between. 1 re-voxelizes every frame.
    pub voxelize_stride: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self { voxelize_stride: 1 }
    }
}

fn check_inputs(motion: &MotionSequence, bodies: &[FeatureVolume]) -> Result<()> {
    if motion.is_empty() {
        return Err(DynError::Empty("motion has no frames"));
    }
    if bodies.len() != motion.len() {
        return Err(DynError::Shape(format!(
            "{} body volumes for {} frames",
            bodies.len(),
            motion.len()
        )));
    }
    Ok(())
}

fn first_frame(
    coarse: &CoarseModel,
    groom_can: &Groom,
    motion: &MotionSequence,
    bodies: &[FeatureVolume],
) -> Result<FrameRecord> {
    let pose = motion.poses()[0];
    let (groom, _) = coarse_forward(coarse, groom_can, &pose, &bodies[0])?;
    let n = groom.point_count();
    Ok(FrameRecord::new(pose, groom, vec![Vector3::zeros(); n])?)
}

pub fn infer_sequence(
    coarse: &CoarseModel,
    fine: &FineModel,
    groom_can: &Groom,
    motion: &MotionSequence,
    bodies: &[FeatureVolume],
) -> Result<Vec<FrameRecord>> {
    infer_sequence_with(
        coarse,
        fine,
        groom_can,
        motion,
        bodies,
        &InferOptions::default(),
    )
}

/// Closed loop: every fine step consumes the model's own previous outputs.
pub fn infer_sequence_with(
    coarse: &CoarseModel,
    fine: &FineModel,
    groom_can: &Groom,
    motion: &MotionSequence,
    bodies: &[FeatureVolume],
    opts: &InferOptions,
) -> Result<Vec<FrameRecord>> {
    check_inputs(motion, bodies)?;
    if opts.voxelize_stride == 0 {
        return Err(DynError::Config("voxelize_stride must be positive".into()));
    }
    let mut out = vec![first_frame(coarse, groom_can, motion, bodies)?];
    let mut volumes: Vec<FeatureVolume> = Vec::with_capacity(motion.len());
    for t in 1..motion.len() {
        let j = t - 1;
        let vol = if j % opts.voxelize_stride == 0 {
            fine.hair_volume(&out[j].groom)?
        } else {
            volumes[j - 1].clone()
        };
        volumes.push(vol);
        let v2 = &volumes[j.saturating_sub(1)];
        let prev = &out[j];
        let (groom, flow) =
            fine.step_with_volumes(&prev.groom, &volumes[j], v2, &motion.poses()[t], &prev.flow)?;
        out.push(FrameRecord::new(motion.poses()[t], groom, flow)?);
    }
    Ok(out)
}

/// Per-frame coarse prediction with flows taken between consecutive frames.
pub fn infer_coarse_only(
    coarse: &CoarseModel,
    groom_can: &Groom,
    motion: &MotionSequence,
    bodies: &[FeatureVolume],
) -> Result<Vec<FrameRecord>> {
    check_inputs(motion, bodies)?;
    let mut out: Vec<FrameRecord> = Vec::with_capacity(motion.len());
    for (pose, body) in motion.poses().iter().zip(bodies) {
        let (groom, _) = coarse_forward(coarse, groom_can, pose, body)?;
        let flow = match out.last() {
            Some(prev) => FrameRecord::flow_between(&prev.groom, &groom)?,
            None => vec![Vector3::zeros(); groom.point_count()],
        };
        out.push(FrameRecord::new(*pose, groom, flow)?);
    }
    Ok(out)
}

/// Open loop, for evaluation: frame t is predicted from ground-truth frames
/// t−1 and t−2 and the ground-truth previous flow. Frame 0 is copied.
pub fn infer_open_loop(fine: &FineModel, gt: &[FrameRecord]) -> Result<Vec<FrameRecord>> {
    let Some(first) = gt.first() else {
        return Err(DynError::Empty("ground truth has no frames"));
    };
    let volumes = gt
        .iter()
        .map(|r| fine.hair_volume(&r.groom))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![first.clone()];
    for t in 1..gt.len() {
        let prev = &gt[t - 1];
        let flow_prev = if t == 1 {
            vec![Vector3::zeros(); prev.groom.point_count()]
        } else {
            prev.flow.clone()
        };
        let (groom, flow) = fine.step_with_volumes(
            &prev.groom,
            &volumes[t - 1],
            &volumes[t.max(2) - 2],
            &gt[t].pose,
            &flow_prev,
        )?;
        out.push(FrameRecord::new(gt[t].pose, groom, flow)?);
    }
    Ok(out)
}
