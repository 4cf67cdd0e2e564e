use dgh_core::{strand_tangents, Groom, Matrix3, Point3, UnitQuaternion, Vector3};

use crate::error::Result;
use crate::sh::{rgb_to_dc, SH_WIDTH};

/// Fixed radial scale of every primitive, in meters.
pub const RADIAL_SCALE: f64 = 5e-4;
pub const DEFAULT_OPACITY: f64 = 0.8;

/// A cylindrical Gaussian on one hair segment: long along the tangent,
/// thin and isotropic across it.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Point3<f64>,
    pub tangent: Vector3<f64>,
    pub axial_scale: f64,
    pub radial_scale: f64,
    /// Columns are the local axes; the first is the tangent.
    pub rotation: Matrix3<f64>,
    pub opacity: f64,
    /// `[k][c]` layout, see [`crate::sh`].
    pub sh: Vec<f64>,
}

/// Minimal rotation taking the x-axis to `t`.
pub fn align_x_to(t: &Vector3<f64>) -> Matrix3<f64> {
    let x = Vector3::x();
    match UnitQuaternion::rotation_between(&x, t) {
        Some(q) => q.to_rotation_matrix().into_inner(),
        // Antiparallel: any half turn about an axis orthogonal to x.
        None => Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)),
    }
}

/// One primitive per segment with a constant base color.
pub fn init_primitives(groom: &Groom, base_color: [f64; 3]) -> Result<Vec<GaussianPrimitive>> {
    let mut sh = vec![0.0; SH_WIDTH];
    for c in 0..3 {
        sh[c] = rgb_to_dc(base_color[c]);
    }
    let mut out = Vec::with_capacity(groom.segment_count());
    for strand in groom.strands() {
        let tangents = strand_tangents(strand)?;
        for (w, t) in strand.windows(2).zip(tangents) {
            out.push(GaussianPrimitive {
                mean: Point3::from((w[0].coords + w[1].coords) * 0.5),
                tangent: t,
                axial_scale: 0.5 * (w[1] - w[0]).norm(),
                radial_scale: RADIAL_SCALE,
                rotation: align_x_to(&t),
                opacity: DEFAULT_OPACITY,
                sh: sh.clone(),
            });
        }
    }
    Ok(out)
}

/// `R S Sᵀ Rᵀ` with `S = diag(axial, radial, radial)`.
pub fn build_covariance(prim: &GaussianPrimitive) -> Matrix3<f64> {
    let s = Vector3::new(prim.axial_scale, prim.radial_scale, prim.radial_scale);
    let rs = prim.rotation * Matrix3::from_diagonal(&s);
    rs * rs.transpose()
}
