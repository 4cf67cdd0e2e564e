use dgh_core::{Camera, Point3, Vector3};
use nalgebra::{Matrix2, Matrix2x3, Vector2};

use crate::primitive::{build_covariance, GaussianPrimitive};
use crate::sh::eval_sh;

/// Added to the diagonal of every projected covariance, in px².
pub const COV_FLOOR: f64 = 0.3;

/// A primitive projected into one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    /// Index of the source primitive; breaks depth ties.
    pub index: usize,
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

/// Jacobian of `(fx x/z + cx, fy y/z + cy)` at camera-space `p`.
pub fn projection_jacobian(cam: &Camera, p: &Point3<f64>) -> Matrix2x3<f64> {
    let z = p.z;
    Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * p.x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * p.y / (z * z),
    )
}

pub fn project_point(cam: &Camera, p: &Point3<f64>) -> Vector2<f64> {
    Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy)
}

/// Camera-space mean, pixel mean and `J W`, or `None` behind the near plane.
pub(crate) fn project_frame(
    cam: &Camera,
    mean: &Point3<f64>,
) -> Option<(Point3<f64>, Vector2<f64>, Matrix2x3<f64>)> {
    let pc = cam.to_camera(mean);
    if pc.z <= cam.near {
        return None;
    }
    let jw = projection_jacobian(cam, &pc) * cam.rotation();
    Some((pc, project_point(cam, &pc), jw))
}

/// Unit direction from the camera center to `p`.
pub fn view_direction(cam: &Camera, p: &Point3<f64>) -> Vector3<f64> {
    (p - cam.center()).normalize()
}

/// `Σ′ = J W Σ Wᵀ Jᵀ + 0.3 I`; `None` when the primitive is culled.
pub fn project_gaussian(prim: &GaussianPrimitive, cam: &Camera, index: usize) -> Option<Splat2D> {
    let (pc, mean, jw) = project_frame(cam, &prim.mean)?;
    let cov = jw * build_covariance(prim) * jw.transpose() + Matrix2::identity() * COV_FLOOR;
    Some(Splat2D {
        index,
        mean,
        cov,
        depth: pc.z,
        color: eval_sh(&prim.sh, &view_direction(cam, &prim.mean)),
        opacity: prim.opacity,
    })
}

pub fn project_all(prims: &[GaussianPrimitive], cam: &Camera) -> Vec<Splat2D> {
    prims
        .iter()
        .enumerate()
        .filter_map(|(i, p)| project_gaussian(p, cam, i))
        .collect()
}
