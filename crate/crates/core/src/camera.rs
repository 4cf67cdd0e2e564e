//! Pinhole camera with a rigid world-to-camera transform.
//!
//! Camera space follows the vision convention: +x right, +y down, +z forward.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::strand::HeadPose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCamera", into = "RawCamera")]
pub struct Camera {
    world_to_camera: Matrix4<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    /// Row-major 4x4 world-to-camera matrix.
    #[serde(rename = "W")]
    w: [f64; 16],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    near: f64,
}

impl TryFrom<RawCamera> for Camera {
    type Error = CoreError;

    fn try_from(raw: RawCamera) -> Result<Self> {
        let w = Matrix4::from_row_slice(&raw.w);
        Camera::new(
            w, raw.fx, raw.fy, raw.cx, raw.cy, raw.width, raw.height, raw.near,
        )
    }
}

impl From<Camera> for RawCamera {
    fn from(c: Camera) -> Self {
        let mut w = [0.0; 16];
        for r in 0..4 {
            for col in 0..4 {
                w[r * 4 + col] = c.world_to_camera[(r, col)];
            }
        }
        RawCamera {
            w,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            near: c.near,
        }
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        world_to_camera: Matrix4<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(CoreError::Validation(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if !(near > 0.0) {
            return Err(CoreError::Validation(format!(
                "near plane must be positive, got {near}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(CoreError::Validation("image size must be nonzero".into()));
        }
        if !world_to_camera.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Validation("non-finite extrinsic".into()));
        }
        let r: Matrix3<f64> = world_to_camera.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-6 {
            return Err(CoreError::Validation(format!(
                "extrinsic rotation is not orthonormal (error {err:e})"
            )));
        }
        let bottom = world_to_camera.fixed_view::<1, 4>(3, 0);
        if (bottom[0], bottom[1], bottom[2], bottom[3]) != (0.0, 0.0, 0.0, 1.0) {
            return Err(CoreError::Validation(
                "extrinsic bottom row must be (0,0,0,1)".into(),
            ));
        }
        Ok(Self {
            world_to_camera,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
        })
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(CoreError::Validation(
                "look_at up vector is parallel to view".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye.coords);
        let mut w = Matrix4::identity();
        w.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        w.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self::new(
            w,
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            near,
        )
    }

    pub fn world_to_camera(&self) -> &Matrix4<f64> {
        &self.world_to_camera
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation() * p.coords + self.translation())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation().transpose() * self.translation()))
    }

    /// The camera that sees `pose`-transformed geometry the way `self` sees the original.
    pub fn following(&self, pose: &HeadPose) -> Result<Camera> {
        let inv = pose.inverse().isometry().to_homogeneous();
        Camera::new(
            self.world_to_camera * inv,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            self.near,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = Camera::look_at(
            Point3::new(1.0, 2.0, 0.5),
            Point3::origin(),
            Vector3::z(),
            50.0,
            50.0,
            32,
            32,
            0.01,
        )
        .unwrap();
        let c = cam.to_camera(&Point3::origin());
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12);
        assert!((c.z - (1.0f64 + 4.0 + 0.25).sqrt()).abs() < 1e-12);
        assert!((cam.center() - Point3::new(1.0, 2.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn validation_and_json() {
        let mut w = Matrix4::identity();
        w[(0, 0)] = 2.0;
        assert!(Camera::new(w, 1.0, 1.0, 0.0, 0.0, 4, 4, 0.1).is_err());
        assert!(Camera::new(Matrix4::identity(), 0.0, 1.0, 0.0, 0.0, 4, 4, 0.1).is_err());
        assert!(Camera::new(Matrix4::identity(), 1.0, 1.0, 0.0, 0.0, 4, 4, 0.0).is_err());
        let cam = Camera::look_at(
            Point3::new(0.3, -1.0, 0.2),
            Point3::new(0.0, 0.0, 0.1),
            Vector3::z(),
            40.0,
            41.0,
            16,
            12,
            0.05,
        )
        .unwrap();
        let s = serde_json::to_string(&cam).unwrap();
        let back: Camera = serde_json::from_str(&s).unwrap();
        assert_eq!(cam, back);
    }
}
