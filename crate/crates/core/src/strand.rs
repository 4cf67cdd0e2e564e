//! Strands, grooms, head poses and rigid kinematics.

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Minimum allowed distance between consecutive strand points (meters).
pub const MIN_SEGMENT_LENGTH: f64 = 1e-9;

/// Default vertex count per strand.
pub const DEFAULT_VERTICES_PER_STRAND: usize = 24;

/// Smallest vertex count a groom may be configured with.
pub const MIN_VERTICES_PER_STRAND: usize = 2;

const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// A single polyline of at least two points.
#[derive(Clone, Debug, PartialEq)]
pub struct Strand {
    points: Vec<Point3<f64>>,
}

impl Strand {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        validate_strand(&points)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }
}

impl std::ops::Deref for Strand {
    type Target = [Point3<f64>];

    fn deref(&self) -> &[Point3<f64>] {
        &self.points
    }
}

fn validate_strand(points: &[Point3<f64>]) -> Result<()> {
    if points.len() < MIN_VERTICES_PER_STRAND {
        return Err(CoreError::Validation(format!(
            "strand has {} points, need at least {MIN_VERTICES_PER_STRAND}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|p| !p.coords.iter().all(|c| c.is_finite()))
    {
        return Err(CoreError::Validation("non-finite strand coordinate".into()));
    }
    for (segment, w) in points.windows(2).enumerate() {
        let length = (w[1] - w[0]).norm();
        if length <= MIN_SEGMENT_LENGTH {
            return Err(CoreError::DegenerateSegment { segment, length });
        }
    }
    Ok(())
}

/// A hairstyle: strands of equal vertex count, stored strand-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Groom {
    vertices_per_strand: usize,
    points: Vec<Point3<f64>>,
}

impl Groom {
    /// Builds a groom from a flat strand-major point list.
    pub fn from_points(vertices_per_strand: usize, points: Vec<Point3<f64>>) -> Result<Self> {
        if vertices_per_strand < MIN_VERTICES_PER_STRAND {
            return Err(CoreError::Validation(format!(
                "vertices_per_strand must be >= {MIN_VERTICES_PER_STRAND}, got {vertices_per_strand}"
            )));
        }
        if points.len() % vertices_per_strand != 0 {
            return Err(CoreError::Validation(format!(
                "{} points is not a multiple of {vertices_per_strand} vertices per strand",
                points.len()
            )));
        }
        for strand in points.chunks(vertices_per_strand) {
            validate_strand(strand)?;
        }
        Ok(Self {
            vertices_per_strand,
            points,
        })
    }

    pub fn from_strands(strands: Vec<Strand>) -> Result<Self> {
        let vps = strands
            .first()
            .map(|s| s.len())
            .ok_or(CoreError::Empty("groom has no strands"))?;
        if let Some(bad) = strands.iter().find(|s| s.len() != vps) {
            return Err(CoreError::Validation(format!(
                "strand has {} points, groom uses {vps}",
                bad.len()
            )));
        }
        let points = strands.into_iter().flat_map(Strand::into_points).collect();
        Ok(Self {
            vertices_per_strand: vps,
            points,
        })
    }

    pub fn vertices_per_strand(&self) -> usize {
        self.vertices_per_strand
    }

    pub fn strand_count(&self) -> usize {
        self.points.len() / self.vertices_per_strand
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn segment_count(&self) -> usize {
        self.strand_count() * (self.vertices_per_strand - 1)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn strand(&self, index: usize) -> &[Point3<f64>] {
        let n = self.vertices_per_strand;
        &self.points[index * n..(index + 1) * n]
    }

    pub fn strands(&self) -> impl ExactSizeIterator<Item = &[Point3<f64>]> + '_ {
        self.points.chunks(self.vertices_per_strand)
    }

    /// Root (index 0) of every strand.
    pub fn roots(&self) -> impl Iterator<Item = &Point3<f64>> + '_ {
        self.strands().map(|s| &s[0])
    }

    /// Same topology, new positions. Positions are re-validated.
    pub fn with_points(&self, points: Vec<Point3<f64>>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(CoreError::Shape(format!(
                "expected {} points, got {}",
                self.points.len(),
                points.len()
            )));
        }
        Self::from_points(self.vertices_per_strand, points)
    }

    /// Keeps every `stride`-th strand, starting with strand 0.
    pub fn subsample_strands(&self, stride: usize) -> Groom {
        let stride = stride.max(1);
        let points = self
            .strands()
            .step_by(stride)
            .flat_map(|s| s.iter().copied())
            .collect();
        Groom {
            vertices_per_strand: self.vertices_per_strand,
            points,
        }
    }

    pub fn same_topology(&self, other: &Groom) -> bool {
        self.vertices_per_strand == other.vertices_per_strand
            && self.points.len() == other.points.len()
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from(Vector3::repeat(f64::INFINITY));
        let mut hi = Point3::from(Vector3::repeat(f64::NEG_INFINITY));
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

/// Rigid head transform: unit quaternion rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct HeadPose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    /// (w, x, y, z)
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl TryFrom<RawPose> for HeadPose {
    type Error = CoreError;

    fn try_from(raw: RawPose) -> Result<Self> {
        let [w, x, y, z] = raw.rotation;
        HeadPose::new(Quaternion::new(w, x, y, z), Vector3::from(raw.translation))
    }
}

impl From<HeadPose> for RawPose {
    fn from(pose: HeadPose) -> Self {
        let q = pose.rotation.quaternion();
        RawPose {
            rotation: [q.w, q.i, q.j, q.k],
            translation: pose.translation.into(),
        }
    }
}

impl Default for HeadPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl HeadPose {
    /// Number of features produced by [`HeadPose::features`].
    pub const FEATURES: usize = 7;

    /// Validates that `rotation` is a unit quaternion within 1e-6 and
    /// renormalizes it unless it is already unit to rounding.
    pub fn new(rotation: Quaternion<f64>, translation: Vector3<f64>) -> Result<Self> {
        let norm = rotation.norm();
        if !(norm - 1.0).abs().le(&QUATERNION_NORM_TOLERANCE) {
            return Err(CoreError::Validation(format!(
                "head pose quaternion has norm {norm}, expected 1"
            )));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(CoreError::Validation("non-finite head translation".into()));
        }
        // Quaternions that are unit to rounding keep their exact bits so
        // poses round-trip through JSON unchanged.
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(rotation)
        } else {
            UnitQuaternion::new_normalize(rotation)
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Rotation from Euler angles (roll about x, pitch about y, yaw about z).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        Self::from_parts(
            UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            translation,
        )
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// `R p + t`.
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// The pose that applies `self` first, then `after`.
    pub fn then(&self, after: &HeadPose) -> HeadPose {
        HeadPose::from_parts(
            after.rotation * self.rotation,
            after.rotation * self.translation + after.translation,
        )
    }

    pub fn inverse(&self) -> HeadPose {
        let inv = self.rotation.inverse();
        HeadPose::from_parts(inv, -(inv * self.translation))
    }

    /// (q.w, q.x, q.y, q.z, t.x, t.y, t.z)
    pub fn features(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        [
            q.w,
            q.i,
            q.j,
            q.k,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    /// Bit-level digest, used as a cache key.
    pub fn digest(&self) -> u64 {
        // FNV-1a over the feature bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for f in self.features() {
            for b in f.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// An ordered list of head poses sampled at `frame_rate` Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    poses: Vec<HeadPose>,
    frame_rate: f64,
}

impl MotionSequence {
    pub fn new(poses: Vec<HeadPose>, frame_rate: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(CoreError::Empty("motion sequence has no poses"));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(CoreError::Validation(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        Ok(Self { poses, frame_rate })
    }

    pub fn poses(&self) -> &[HeadPose] {
        &self.poses
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Maps every groom point through `pose`. Topology is unchanged.
pub fn rigid_transform(groom: &Groom, pose: &HeadPose) -> Groom {
    Groom {
        vertices_per_strand: groom.vertices_per_strand,
        points: groom.points.iter().map(|p| pose.apply(p)).collect(),
    }
}

/// Unit tangent of each segment, `(p[i+1] - p[i]) / |p[i+1] - p[i]|`.
pub fn strand_tangents(strand: &[Point3<f64>]) -> Result<Vec<Vector3<f64>>> {
    strand
        .windows(2)
        .enumerate()
        .map(|(segment, w)| {
            let d = w[1] - w[0];
            let length = d.norm();
            if length <= MIN_SEGMENT_LENGTH || !length.is_finite() {
                Err(CoreError::DegenerateSegment { segment, length })
            } else {
                Ok(d / length)
            }
        })
        .collect()
}
