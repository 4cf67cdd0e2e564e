//! Training loops for both stages.

use dgh_core::{rigid_transform, FeatureVolume, FrameRecord, Groom, HeadPose, Point3, Vector3};
use dgh_nn::loss::{loss_flow, loss_point, loss_sdf, total_loss, LossWeights};
use dgh_nn::{AdamConfig, AdamState, NnError, Tape, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::CoarseModel;
use crate::config::TrainConfig;
use crate::error::{DynError, Result};
use crate::features::{check_grid, gather, point_rows, vector_rows, volume_var};
use crate::fine::FineModel;

/// Ground-truth frames of one motion with the body distance field per frame.
#[derive(Clone, Debug)]
pub struct TrainingSequence {
    pub frames: Vec<FrameRecord>,
    pub bodies: Vec<FeatureVolume>,
}

impl TrainingSequence {
    pub fn new(frames: Vec<FrameRecord>, bodies: Vec<FeatureVolume>) -> Result<Self> {
        if frames.len() != bodies.len() {
            return Err(DynError::Shape(format!(
                "{} frames but {} body volumes",
                frames.len(),
                bodies.len()
            )));
        }
        Ok(Self { frames, bodies })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Total loss of every step, in order.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }

    /// Mean of the last `n` losses.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let k = n.min(self.losses.len()).max(1);
        self.losses[self.losses.len().saturating_sub(k)..]
            .iter()
            .sum::<f64>()
            / k as f64
    }
}

fn subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        (0..n).collect()
    } else {
        sample(rng, n, k).into_vec()
    }
}

fn optimizer_step(
    adam: &mut AdamState,
    store: &mut dgh_nn::ParamStore,
    tape: &Tape,
    loss: Var<'_>,
    step: usize,
) -> Result<f64> {
    let value = loss.item();
    if !value.is_finite() {
        return Err(DynError::NonFinite {
            what: "loss".into(),
            step,
        });
    }
    let grads = tape.backward(loss).params(store);
    match adam.step(store, &grads) {
        Err(NnError::NonFiniteGradient { name }) => Err(DynError::NonFinite {
            what: format!("gradient of {name}"),
            step,
        }),
        r => r.map(|_| value).map_err(Into::into),
    }
}

struct CoarseFrame<'a> {
    pose: HeadPose,
    rigid: Vec<Point3<f64>>,
    gt: &'a [Point3<f64>],
    body: &'a FeatureVolume,
    hair: FeatureVolume,
}

/// Fits displacements `gt − rigid` over randomly chosen frames and point
/// subsets, with the body-penetration penalty weighted by `sdf_weight`.
pub fn train_coarse(
    mut model: CoarseModel,
    data: &[TrainingSequence],
    cfg: &TrainConfig,
) -> Result<(CoarseModel, TrainReport)> {
    cfg.validate()?;
    let mut frames = Vec::new();
    for seq in data {
        for (rec, body) in seq.frames.iter().zip(&seq.bodies) {
            if !rec.groom.same_topology(&model.reference) {
                return Err(DynError::Topology(
                    "training frame differs from the model's reference groom".into(),
                ));
            }
            check_grid(body, &model.grid, "body sdf")?;
            frames.push(CoarseFrame {
                pose: rec.pose,
                rigid: rigid_transform(&model.reference, &rec.pose)
                    .points()
                    .to_vec(),
                gt: rec.groom.points(),
                body,
                hair: model.rigid_hair_volume(&rec.pose)?,
            });
        }
    }
    if frames.is_empty() {
        return Err(DynError::Empty("coarse training needs at least one frame"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate));
    let weights = LossWeights {
        point: cfg.point_weight,
        sdf: cfg.sdf_weight,
    };
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let f = &frames[rng.gen_range(0..frames.len())];
        let idx = subset(&mut rng, f.rigid.len(), cfg.points_per_step);
        let rigid = gather(&f.rigid, &idx);
        let n = idx.len();
        let tape = Tape::new();
        let d = model.displacement(&tape, f.body, &f.hair, &rigid, &f.pose)?;
        let pred = tape.constant(&[n, 3], point_rows(&rigid)).add(d)?;
        let gt = tape.constant(&[n, 3], point_rows(&gather(f.gt, &idx)));
        let lp = loss_point(pred, gt)?;
        let loss = if cfg.sdf_weight > 0.0 {
            let sdf = loss_sdf(pred, volume_var(&tape, f.body), &model.grid)?;
            total_loss(lp, sdf, weights)?
        } else {
            lp.scale(cfg.point_weight)
        };
        losses.push(optimizer_step(
            &mut adam,
            &mut model.store,
            &tape,
            loss,
            step,
        )?);
        if step % 100 == 0 {
            log::debug!("coarse step {step}: loss {:.3e}", losses[step]);
        }
    }
    Ok((model, TrainReport { losses }))
}

struct RolloutState {
    groom: Groom,
    volume: FeatureVolume,
    flow: Vec<Vector3<f64>>,
}

/// States at frames t−1 and t−2 reached by starting from ground truth at
/// frame `t − 1 − k` and running the model for `k` frames.
fn rollout(
    model: &FineModel,
    frames: &[FrameRecord],
    volumes: &[FeatureVolume],
    t: usize,
    k: usize,
) -> Result<(RolloutState, FeatureVolume)> {
    let a = t - 1 - k;
    let mut prev2 = volumes[a.saturating_sub(1)].clone();
    let mut prev = RolloutState {
        groom: frames[a].groom.clone(),
        volume: volumes[a].clone(),
        flow: if a == 0 {
            vec![Vector3::zeros(); frames[a].groom.point_count()]
        } else {
            frames[a].flow.clone()
        },
    };
    for rec in &frames[a + 1..t] {
        let (groom, flow) =
            model.step_with_volumes(&prev.groom, &prev.volume, &prev2, &rec.pose, &prev.flow)?;
        let volume = model.hair_volume(&groom)?;
        prev2 = std::mem::replace(
            &mut prev,
            RolloutState {
                groom,
                volume,
                flow,
            },
        )
        .volume;
    }
    Ok((prev, prev2))
}

/// Flow training. Each sample predicts frame t from states at t−1 and t−2
/// (t−2 := t−1 at t = 1, where the input flow is zero). With
/// `rollout_steps > 0` those states come from a short model rollout that
/// starts on ground truth, and the target is the ground-truth position at t
/// minus the rolled-out position at t−1; with no rollout this is exactly the
/// ground-truth flow.
pub fn train_fine(
    mut model: FineModel,
    data: &[TrainingSequence],
    cfg: &TrainConfig,
) -> Result<(FineModel, TrainReport)> {
    cfg.validate()?;
    let mut volumes = Vec::with_capacity(data.len());
    let mut samples = Vec::new();
    for (s, seq) in data.iter().enumerate() {
        if seq.frames.len() < 3 {
            return Err(DynError::Empty(
                "fine training sequences need at least 3 frames",
            ));
        }
        let first = &seq.frames[0].groom;
        let mut vols = Vec::with_capacity(seq.frames.len());
        for rec in &seq.frames {
            if !rec.groom.same_topology(first) {
                return Err(DynError::Topology("frames within a sequence differ".into()));
            }
            vols.push(model.hair_volume(&rec.groom)?);
        }
        volumes.push(vols);
        samples.extend((1..seq.frames.len()).map(|t| (s, t)));
    }
    if samples.is_empty() {
        return Err(DynError::Empty("fine training needs at least one sequence"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (s, t) = samples[rng.gen_range(0..samples.len())];
        let frames = &data[s].frames;
        let k = rng.gen_range(0..=cfg.rollout_steps.min(t - 1));
        let (prev, prev2) = rollout(&model, frames, &volumes[s], t, k)?;
        let idx = subset(&mut rng, prev.groom.point_count(), cfg.points_per_step);
        let n = idx.len();
        let points = gather(prev.groom.points(), &idx);
        let flow_prev = gather(&prev.flow, &idx);
        let target: Vec<Vector3<f64>> = idx
            .iter()
            .map(|&i| frames[t].groom.points()[i] - prev.groom.points()[i])
            .collect();
        let tape = Tape::new();
        let features = model.flow_features(&tape, &prev.volume, &prev2)?;
        let pred = model.flow(&tape, features, &points, &frames[t].pose, &flow_prev)?;
        let gt = tape.constant(&[n, 3], vector_rows(&target, 1.0));
        let loss = loss_flow(pred, gt)?.scale(cfg.point_weight);
        losses.push(optimizer_step(
            &mut adam,
            &mut model.store,
            &tape,
            loss,
            step,
        )?);
        if step % 100 == 0 {
            log::debug!("fine step {step}: loss {:.3e}", losses[step]);
        }
    }
    Ok((model, TrainReport { losses }))
}
