use dgh_core::volume::DEFAULT_TRUNCATION_VOXELS;
use dgh_core::GridSpec;
use dgh_nn::{AttentionSpec, Unet3dSpec};
use serde::{Deserialize, Serialize};

use crate::error::{DynError, Result};

/// Width of the head pose feature (quaternion then translation).
pub const POSE_WIDTH: usize = 7;

fn default_encoder() -> Unet3dSpec {
    Unet3dSpec {
        in_channels: 1,
        base_filters: 2,
        out_channels: 8,
        ..Unet3dSpec::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseConfig {
    /// Shared shape of the pose and hair encoders.
    pub encoder: Unet3dSpec,
    pub hidden: Vec<usize>,
    /// Positional-encoding frequencies applied to grid-normalized positions.
    pub frequencies: usize,
    /// The network output is multiplied by this length (meters).
    pub displacement_scale: f64,
    /// Truncation of the hair distance volume, in voxels.
    pub hair_truncation_voxels: f64,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            encoder: default_encoder(),
            hidden: vec![128, 128, 64],
            frequencies: 4,
            displacement_scale: 0.02,
            hair_truncation_voxels: DEFAULT_TRUNCATION_VOXELS,
        }
    }
}

impl CoarseConfig {
    pub fn feature_channels(&self) -> usize {
        2 * self.encoder.out_channels
    }

    pub fn mlp_widths(&self) -> Vec<usize> {
        let input = self.feature_channels() + 6 * self.frequencies + POSE_WIDTH;
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(3);
        w
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        check_encoder(&self.encoder, grid)?;
        check_positive("displacement_scale", self.displacement_scale)?;
        check_positive("hair_truncation_voxels", self.hair_truncation_voxels)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineConfig {
    pub encoder: Unet3dSpec,
    pub attention: AttentionSpec,
    /// Without attention the flow features are the encoded previous frame alone.
    pub use_attention: bool,
    /// Without motion the previous-flow input is held at zero.
    pub use_motion: bool,
    pub hidden: Vec<usize>,
    pub frequencies: usize,
    /// Output and previous-flow input are expressed in units of this length.
    pub flow_scale: f64,
    pub hair_truncation_voxels: f64,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            encoder: default_encoder(),
            attention: AttentionSpec::default(),
            use_attention: true,
            use_motion: true,
            hidden: vec![128, 128, 64],
            frequencies: 4,
            flow_scale: 0.01,
            hair_truncation_voxels: DEFAULT_TRUNCATION_VOXELS,
        }
    }
}

impl FineConfig {
    pub fn feature_channels(&self) -> usize {
        let c = self.encoder.out_channels;
        if self.use_attention {
            2 * c
        } else {
            c
        }
    }

    pub fn mlp_widths(&self) -> Vec<usize> {
        let input = self.feature_channels() + POSE_WIDTH + 3 + 6 * self.frequencies;
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(3);
        w
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        check_encoder(&self.encoder, grid)?;
        check_positive("flow_scale", self.flow_scale)?;
        check_positive("hair_truncation_voxels", self.hair_truncation_voxels)?;
        if self.use_attention {
            let a = &self.attention;
            if a.channels != self.encoder.out_channels {
                return Err(DynError::Config(format!(
                    "attention channels {} differ from encoder output {}",
                    a.channels, self.encoder.out_channels
                )));
            }
            if a.patch == 0 || a.key_width == 0 || grid.resolution.iter().any(|n| n % a.patch != 0)
            {
                return Err(DynError::Config(format!(
                    "attention patch {} must divide grid {:?}",
                    a.patch, grid.resolution
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Points sampled without replacement per step (all points if fewer).
    pub points_per_step: usize,
    pub point_weight: f64,
    /// Body-penetration weight; used by the coarse stage only.
    pub sdf_weight: f64,
    /// Fine stage only: each sample starts up to this many frames earlier
    /// from ground truth and rolls the model forward to frame t−1 before
    /// the supervised step. 0 is pure teacher forcing.
    pub rollout_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 1e-3,
            points_per_step: 2000,
            point_weight: 1.0,
            sdf_weight: 0.01,
            rollout_steps: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("learning_rate", self.learning_rate)?;
        if self.points_per_step == 0 {
            return Err(DynError::Config("points_per_step must be positive".into()));
        }
        if !(self.point_weight >= 0.0 && self.sdf_weight >= 0.0) {
            return Err(DynError::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DynError::Config(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn check_encoder(spec: &Unet3dSpec, grid: &GridSpec) -> Result<()> {
    if spec.in_channels != 1 || spec.base_filters == 0 || spec.out_channels == 0 {
        return Err(DynError::Config(format!(
            "encoders take one distance channel and need filters, got {spec:?}"
        )));
    }
    let div = 1 << dgh_nn::unet::LEVELS;
    if grid.resolution.iter().any(|n| n % div != 0) {
        return Err(DynError::Config(format!(
            "grid {:?} must be divisible by {div} on every axis",
            grid.resolution
        )));
    }
    Ok(())
}
