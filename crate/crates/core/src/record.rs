//! Per-frame state of a hair sequence.

use nalgebra::Vector3;

use crate::error::{CoreError, Result};
use crate::strand::{Groom, HeadPose};

/// One frame: head pose, hair positions, per-point flow from the previous
/// frame, and the key of the body distance field for this pose.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub pose: HeadPose,
    pub groom: Groom,
    pub flow: Vec<Vector3<f64>>,
    pub body_key: u64,
}

impl FrameRecord {
    pub fn new(pose: HeadPose, groom: Groom, flow: Vec<Vector3<f64>>) -> Result<Self> {
        if flow.len() != groom.point_count() {
            return Err(CoreError::Shape(format!(
                "flow has {} vectors for {} points",
                flow.len(),
                groom.point_count()
            )));
        }
        let body_key = pose.digest();
        Ok(Self {
            pose,
            groom,
            flow,
            body_key,
        })
    }

    /// Flow of `next` relative to `prev`, point by point.
    pub fn flow_between(prev: &Groom, next: &Groom) -> Result<Vec<Vector3<f64>>> {
        if !prev.same_topology(next) {
            return Err(CoreError::Shape("grooms differ in topology".into()));
        }
        Ok(prev
            .points()
            .iter()
            .zip(next.points())
            .map(|(a, b)| b - a)
            .collect())
    }
}
