//! A small head-and-shoulders scene with a settled groom, used for tests,
//! benchmarks and the CLI's default data.

use std::f64::consts::PI;

use dgh_core::volume::voxelize_mesh;
use dgh_core::{
    FeatureVolume, GridSpec, Groom, HeadPose, MotionSequence, Point3, ProxyMesh, Vector3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::motion::{make_head_motion, Ease};
use crate::xpbd::{simulate_sequence, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySceneConfig {
    pub strands: usize,
    pub vertices_per_strand: usize,
    pub strand_length: f64,
    pub head_radius: f64,
    /// Roots sit this far outside the head surface.
    pub root_offset: f64,
    pub shoulder_center: [f64; 3],
    pub shoulder_radii: [f64; 3],
    pub grid_resolution: usize,
    pub grid_half_extent: f64,
    /// Frames simulated at rest to let the initial radial strands drape.
    pub settle_frames: usize,
    pub settle_damping: f64,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        Self {
            strands: 20,
            vertices_per_strand: 16,
            strand_length: 0.24,
            head_radius: 0.1,
            root_offset: 0.003,
            shoulder_center: [0.0, 0.0, -0.3],
            shoulder_radii: [0.26, 0.13, 0.1],
            grid_resolution: 32,
            grid_half_extent: 0.4,
            settle_frames: 120,
            settle_damping: 0.1,
        }
    }
}

impl ToySceneConfig {
    /// The cube grid centered on the origin that every volume of the scene uses.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::cube(
            [0.0; 3],
            self.grid_half_extent,
            self.grid_resolution,
        )?)
    }
}

#[derive(Clone, Debug)]
pub struct ToyScene {
    pub config: ToySceneConfig,
    /// Settled groom at the identity pose.
    pub canonical: Groom,
    /// Head mesh at the identity pose; it moves with the head.
    pub head: ProxyMesh,
    /// Static upper body.
    pub shoulders: ProxyMesh,
    pub grid: GridSpec,
    shoulder_sdf: FeatureVolume,
}

impl ToyScene {
    pub fn build(config: ToySceneConfig, sim: &SimConfig, seed: u64) -> Result<Self> {
        let grid = config.grid_spec()?;
        let head = ProxyMesh::icosphere(Point3::origin(), config.head_radius, 2);
        let shoulders = ProxyMesh::ellipsoid(
            Point3::from(config.shoulder_center),
            Vector3::from(config.shoulder_radii),
            2,
        );
        let shoulder_sdf = voxelize_mesh(&shoulders, &grid)?;
        let mut scene = Self {
            canonical: radial_groom(&config, seed)?,
            config,
            head,
            shoulders,
            grid,
            shoulder_sdf,
        };
        if scene.config.settle_frames > 0 {
            let frames = scene.config.settle_frames + 1;
            let rest = MotionSequence::new(vec![HeadPose::identity(); frames], 1.0 / sim.dt)?;
            let body = scene.body_sdf(&HeadPose::identity())?;
            let cfg = SimConfig {
                damping: scene.config.settle_damping,
                ..sim.clone()
            };
            let bodies = vec![body; frames];
            let settled = simulate_sequence(&scene.canonical, &rest, &bodies, &cfg)?;
            scene.canonical = settled[frames - 1].groom.clone();
        }
        Ok(scene)
    }

    pub fn body_mesh(&self, pose: &HeadPose) -> ProxyMesh {
        self.head.transformed(pose).merged(&self.shoulders)
    }

    /// Signed distance to head and shoulders. The two solids are disjoint,
    /// so the union's distance is the pointwise minimum and only the head
    /// needs voxelizing per pose.
    pub fn body_sdf(&self, pose: &HeadPose) -> Result<FeatureVolume> {
        let head = voxelize_mesh(&self.head.transformed(pose), &self.grid)?;
        let data = head
            .data()
            .iter()
            .zip(self.shoulder_sdf.data())
            .map(|(a, b)| a.min(*b))
            .collect();
        Ok(FeatureVolume::new(self.grid.clone(), 1, data)?)
    }

    pub fn body_sdfs(&self, motion: &MotionSequence) -> Result<Vec<FeatureVolume>> {
        motion.poses().iter().map(|p| self.body_sdf(p)).collect()
    }
}

/// Straight strands growing along the head normal from roots on a band
/// around the head.
fn radial_groom(cfg: &ToySceneConfig, seed: u64) -> Result<Groom> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.strands;
    let vps = cfg.vertices_per_strand;
    let seg = cfg.strand_length / (vps - 1) as f64;
    let mut points = Vec::with_capacity(n * vps);
    for k in 0..n {
        let phi = 2.0 * PI * (k as f64 + rng.gen_range(0.0..0.8)) / n as f64;
        let theta = rng.gen_range(35f64..100.0).to_radians();
        let normal = Vector3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        );
        let root = Point3::from(normal * (cfg.head_radius + cfg.root_offset));
        points.extend((0..vps).map(|i| root + normal * (seg * i as f64)));
    }
    Ok(Groom::from_points(vps, points)?)
}

/// Random keyframed motion starting from the identity pose: a turn to a
/// random orientation and back towards a second one.
pub fn random_motion(
    seed: u64,
    frames: usize,
    max_angle: f64,
    frame_rate: f64,
) -> Result<MotionSequence> {
    random_motion_keys(seed, 2, frames, max_angle, frame_rate)
}

/// Like [`random_motion`] with `turns` random keyframes after the identity.
pub fn random_motion_keys(
    seed: u64,
    turns: usize,
    frames: usize,
    max_angle: f64,
    frame_rate: f64,
) -> Result<MotionSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = vec![HeadPose::identity()];
    for _ in 0..turns {
        let yaw = rng.gen_range(-max_angle..max_angle);
        let pitch = rng.gen_range(-max_angle..max_angle) * 0.6;
        let roll = rng.gen_range(-max_angle..max_angle) * 0.5;
        keys.push(HeadPose::from_euler(roll, pitch, yaw, Vector3::zeros()));
    }
    make_head_motion(&keys, frames, Ease::CatmullRom, frame_rate)
}

/// A quick head turn that stops after `turn_frames` and then holds still,
/// leaving the hair to swing and settle.
pub fn swing_motion(
    angle: f64,
    turn_frames: usize,
    frames: usize,
    frame_rate: f64,
) -> Result<MotionSequence> {
    let keys = [
        HeadPose::identity(),
        HeadPose::from_euler(0.0, 0.0, angle, Vector3::zeros()),
    ];
    let turn = make_head_motion(&keys, turn_frames.max(2), Ease::CatmullRom, frame_rate)?;
    let mut poses = turn.poses().to_vec();
    while poses.len() < frames {
        poses.push(keys[1].clone());
    }
    Ok(MotionSequence::new(poses, frame_rate)?)
}

/// Head yaw `A·exp(−t/decay)·sin(2πt/period)` with `t` in frames: a shake
/// that keeps swinging while it dies out.
pub fn damped_oscillation_motion(
    amplitude: f64,
    period_frames: f64,
    decay_frames: f64,
    frames: usize,
    frame_rate: f64,
) -> Result<MotionSequence> {
    let poses = (0..frames)
        .map(|t| {
            let t = t as f64;
            let yaw = amplitude * (-t / decay_frames).exp() * (2.0 * PI * t / period_frames).sin();
            HeadPose::from_euler(0.0, 0.0, yaw, Vector3::zeros())
        })
        .collect();
    Ok(MotionSequence::new(poses, frame_rate)?)
}

/// Solver settings for the toy benchmark: the default 4 substeps × 10
/// iterations leave ~8% stretch on a 16-vertex hanging strand, so the
/// benchmark runs more substeps to stay well under 1%.
pub fn benchmark_sim_config() -> SimConfig {
    SimConfig {
        substeps: 16,
        iterations: 20,
        ..SimConfig::default()
    }
}
