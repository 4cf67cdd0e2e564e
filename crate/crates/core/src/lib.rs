//! Shared domain types for the dynamic hair pipeline.
//!
//! Hair is stored as a [`Groom`]: a flat, strand-major list of points with a
//! fixed number of vertices per strand. Head motion is a sequence of rigid
//! [`HeadPose`]s. Dense voxel data (distance fields and learned features)
//! lives in [`FeatureVolume`].
//!
//! All types are plain values; every operation here is a pure function.

pub mod camera;
pub mod error;
pub mod image;
pub mod io;
pub mod mesh;
pub mod record;
pub mod strand;
pub mod volume;

pub use camera::Camera;
pub use error::{CoreError, Result};
pub use image::Image;
pub use mesh::ProxyMesh;
pub use record::FrameRecord;
pub use strand::{rigid_transform, strand_tangents, Groom, HeadPose, MotionSequence, Strand};
pub use volume::{
    positional_encoding, sample_trilinear, sdf_penetration, voxelize_mesh, voxelize_points,
    FeatureVolume, GridSpec,
};

pub use nalgebra::{Matrix3, Matrix4, Point3, UnitQuaternion, Vector3};
