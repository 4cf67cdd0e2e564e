use dgh_core::{HeadPose, MotionSequence};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Time parameterization between keyframes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ease {
    Linear,
    /// Cubic Hermite through the keyframe times with Catmull-Rom interior
    /// tangents and zero end tangents, so motion starts and stops at rest.
    #[default]
    CatmullRom,
}

/// Progress in `[0, 1]` along the keyframes at normalized time `u`.
fn progress(u: f64, keys: usize, ease: Ease) -> f64 {
    match ease {
        Ease::Linear => u,
        Ease::CatmullRom => {
            let segs = (keys - 1) as f64;
            let x = u * segs;
            let j = (x.floor() as usize).min(keys - 2);
            let s = x - j as f64;
            let value = |k: usize| k as f64 / segs;
            let tangent = |k: usize| {
                if k == 0 || k == keys - 1 {
                    0.0
                } else {
                    (value(k + 1) - value(k - 1)) / 2.0
                }
            };
            let (s2, s3) = (s * s, s * s * s);
            (2.0 * s3 - 3.0 * s2 + 1.0) * value(j)
                + (s3 - 2.0 * s2 + s) * tangent(j)
                + (-2.0 * s3 + 3.0 * s2) * value(j + 1)
                + (s3 - s2) * tangent(j + 1)
        }
    }
}

fn pose_at(keyframes: &[HeadPose], p: f64) -> HeadPose {
    let segs = keyframes.len() - 1;
    let x = p.clamp(0.0, 1.0) * segs as f64;
    let j = (x.floor() as usize).min(segs - 1);
    let s = x - j as f64;
    let (a, b) = (&keyframes[j], &keyframes[j + 1]);
    if s == 0.0 {
        return a.clone();
    }
    if s == 1.0 {
        return b.clone();
    }
    HeadPose::from_parts(
        a.rotation().slerp(b.rotation(), s),
        a.translation().lerp(b.translation(), s),
    )
}

/// Samples `frames` poses from `keyframes` with slerped rotation and linear
/// translation. The first and last keyframes are reproduced exactly.
pub fn make_head_motion(
    keyframes: &[HeadPose],
    frames: usize,
    ease: Ease,
    frame_rate: f64,
) -> Result<MotionSequence> {
    if keyframes.len() < 2 {
        return Err(SimError::Config(format!(
            "head motion needs at least 2 keyframes, got {}",
            keyframes.len()
        )));
    }
    if frames < 2 {
        return Err(SimError::Config(
            "head motion needs at least 2 frames".into(),
        ));
    }
    let last = frames - 1;
    let poses = (0..frames)
        .map(|i| {
            if i == 0 {
                keyframes[0].clone()
            } else if i == last {
                keyframes[keyframes.len() - 1].clone()
            } else {
                pose_at(
                    keyframes,
                    progress(i as f64 / last as f64, keyframes.len(), ease),
                )
            }
        })
        .collect();
    Ok(MotionSequence::new(poses, frame_rate)?)
}
