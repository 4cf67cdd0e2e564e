//! The pipeline configuration: one JSON document whose sections mirror the
//! library crates. Unknown keys are errors at every level.

use std::path::Path;

use dgh_core::{Camera, Groom, MotionSequence, Point3, Vector3};
use dgh_dynamics::{CoarseConfig, FineConfig, InferOptions, TrainConfig};
use dgh_sim::{
    benchmark_sim_config, damped_oscillation_motion, random_motion_keys, swing_motion, SimConfig,
    ToySceneConfig,
};
use dgh_splat::{AppearanceConfig, AppearanceTrainConfig, ToyLook};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Seeds the scene, every model initialization and every training run.
    pub seed: u64,
    pub simulate: SimulateSection,
    pub dynamics: DynamicsSection,
    pub gsplat: GsplatSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            simulate: SimulateSection::default(),
            dynamics: DynamicsSection::default(),
            gsplat: GsplatSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// One head motion of the toy dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionSpec {
    /// Catmull-Rom through `turns` random orientations after the identity.
    Random {
        seed: u64,
        turns: usize,
        frames: usize,
        max_angle: f64,
    },
    /// A head turn that stops and holds.
    Swing {
        angle: f64,
        turn_frames: usize,
        frames: usize,
    },
    /// Decaying yaw oscillation.
    Damped {
        amplitude: f64,
        period_frames: f64,
        decay_frames: f64,
        frames: usize,
    },
}

impl MotionSpec {
    pub fn build(&self, frame_rate: f64) -> Result<MotionSequence> {
        Ok(match *self {
            MotionSpec::Random {
                seed,
                turns,
                frames,
                max_angle,
            } => random_motion_keys(seed, turns, frames, max_angle, frame_rate)?,
            MotionSpec::Swing {
                angle,
                turn_frames,
                frames,
            } => swing_motion(angle, turn_frames, frames, frame_rate)?,
            MotionSpec::Damped {
                amplitude,
                period_frames,
                decay_frames,
                frames,
            } => damped_oscillation_motion(
                amplitude,
                period_frames,
                decay_frames,
                frames,
                frame_rate,
            )?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub scene: ToySceneConfig,
    pub solver: SimConfig,
    pub frame_rate: f64,
    pub train: Vec<MotionSpec>,
    pub test: Vec<MotionSpec>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let random = |seed| MotionSpec::Random {
            seed,
            turns: 3,
            frames: 60,
            max_angle: 0.7,
        };
        Self {
            scene: ToySceneConfig::default(),
            solver: benchmark_sim_config(),
            frame_rate: 30.0,
            train: vec![
                random(1),
                random(2),
                random(3),
                MotionSpec::Damped {
                    amplitude: 0.5,
                    period_frames: 24.0,
                    decay_frames: 30.0,
                    frames: 60,
                },
            ],
            test: vec![
                random(101),
                MotionSpec::Damped {
                    amplitude: 0.45,
                    period_frames: 20.0,
                    decay_frames: 35.0,
                    frames: 60,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub coarse: CoarseConfig,
    pub fine: FineConfig,
    pub coarse_train: TrainConfig,
    pub fine_train: TrainConfig,
    pub infer: InferOptions,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            coarse: CoarseConfig::default(),
            fine: FineConfig::default(),
            coarse_train: TrainConfig {
                steps: 800,
                ..TrainConfig::default()
            },
            fine_train: TrainConfig {
                steps: 400,
                rollout_steps: 4,
                ..TrainConfig::default()
            },
            infer: InferOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    /// 16-bit RGB PNG.
    Png,
    /// 8-bit binary PPM.
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

/// Cameras on a ring around the canonical groom, all looking at its center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraRig {
    pub count: usize,
    pub size: usize,
    /// Ring radius in meters.
    pub distance: f64,
    /// Height of the ring above the groom center.
    pub height: f64,
    /// Focal length in units of the image size.
    pub focal: f64,
    pub near: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            count: 4,
            size: 48,
            distance: 0.6,
            height: 0.1,
            focal: 1.6,
            near: 0.05,
        }
    }
}

impl CameraRig {
    pub fn cameras(&self, groom: &Groom) -> Result<Vec<Camera>> {
        if self.count == 0 || self.size == 0 {
            return Err(CliError::config(
                "camera rig needs at least one camera and pixel",
            ));
        }
        let (lo, hi) = groom.bounding_box();
        let c = Point3::from((lo.coords + hi.coords) * 0.5);
        let f = self.focal * self.size as f64;
        (0..self.count)
            .map(|k| {
                let a = -std::f64::consts::FRAC_PI_2
                    + std::f64::consts::TAU * k as f64 / self.count as f64;
                let eye = c + Vector3::new(
                    self.distance * a.cos(),
                    self.distance * a.sin(),
                    self.height,
                );
                Ok(Camera::look_at(
                    eye,
                    c,
                    Vector3::z(),
                    f,
                    f,
                    self.size,
                    self.size,
                    self.near,
                )?)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GsplatSection {
    pub appearance: AppearanceConfig,
    pub train: AppearanceTrainConfig,
    /// Look of the ground-truth renders.
    pub look: ToyLook,
    pub cameras: CameraRig,
    /// Appearance training uses every `train_stride`-th frame of every
    /// training sequence.
    pub train_stride: usize,
    /// `render` draws every `render_stride`-th frame.
    pub render_stride: usize,
    pub format: ImageFormat,
}

impl Default for GsplatSection {
    fn default() -> Self {
        Self {
            appearance: AppearanceConfig::default(),
            train: AppearanceTrainConfig {
                steps: 300,
                ..AppearanceTrainConfig::default()
            },
            look: ToyLook::default(),
            cameras: CameraRig::default(),
            train_stride: 30,
            render_stride: 10,
            format: ImageFormat::Png,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Image metrics only over pixels the ground-truth hair covers.
    pub hair_mask: bool,
}

/// Parses `a.b.c=value`. The value is read as JSON when it parses and as a
/// string otherwise.
pub fn parse_override(s: &str) -> std::result::Result<(Vec<String>, Value), String> {
    let (path, raw) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(format!("bad key {path:?}"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.split('.').map(String::from).collect(), value))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = root;
    for (i, key) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("{} is not a section", path[..i].join("."))))?;
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        cur = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Defaults, then the optional config file, then each override in order,
/// then `seed`.
pub fn resolve(
    file: Option<&Path>,
    overrides: &[(Vec<String>, Value)],
    seed: Option<u64>,
) -> Result<PipelineConfig> {
    let mut doc = serde_json::to_value(PipelineConfig::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::config("config must be a JSON object"));
        }
        merge(&mut doc, patch);
    }
    for (path, value) in overrides {
        set_path(&mut doc, path, value.clone())?;
    }
    let mut cfg: PipelineConfig =
        serde_json::from_value(doc).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
