//! Curvature-based blending of neighboring segments along a strand.

use dgh_core::{strand_tangents, Point3, Vector3};

use crate::error::Result;
use crate::primitive::GaussianPrimitive;

pub const CURVATURE_EPS: f64 = 1e-8;

/// `κ_i = ‖t_i − t_{i−1}‖` normalized by the strand maximum; the first
/// segment has no predecessor and gets 0.
pub fn curvature_weights(strand: &[Point3<f64>]) -> Result<Vec<f64>> {
    let t = strand_tangents(strand)?;
    Ok(weights_from_tangents(&t))
}

pub(crate) fn weights_from_tangents(t: &[Vector3<f64>]) -> Vec<f64> {
    let mut k = vec![0.0; t.len()];
    for i in 1..t.len() {
        k[i] = (t[i] - t[i - 1]).norm();
    }
    let max = k.iter().copied().fold(0.0, f64::max);
    k.iter().map(|v| v / (max + CURVATURE_EPS)).collect()
}

/// Per-segment weights for every strand of a groom, strand-major.
pub fn groom_weights(groom: &dgh_core::Groom) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(groom.segment_count());
    for s in groom.strands() {
        out.extend(curvature_weights(s)?);
    }
    Ok(out)
}

/// `x_i (1 − w_i) + x_{i−1} w_i` for SH and opacity, using the unblended
/// predecessor. `prims` holds one strand's primitives in order.
pub fn blend_sh_opacity(prims: &[GaussianPrimitive], weights: &[f64]) -> Vec<GaussianPrimitive> {
    assert_eq!(prims.len(), weights.len(), "one weight per primitive");
    let mut out = prims.to_vec();
    for i in 1..prims.len() {
        let w = weights[i];
        let (cur, prev) = (&prims[i], &prims[i - 1]);
        out[i].opacity = cur.opacity * (1.0 - w) + prev.opacity * w;
        for (k, v) in out[i].sh.iter_mut().enumerate() {
            *v = cur.sh[k] * (1.0 - w) + prev.sh[k] * w;
        }
    }
    out
}

/// Shading term `max(0, t · l)` of one segment.
pub fn diffuse_intensity(t: &Vector3<f64>, light: &Vector3<f64>) -> f64 {
    t.dot(light).max(0.0)
}

/// `|I_i − I_{i+1}|` for each adjacent segment pair, `I = max(0, t · l)`.
pub fn diffuse_discontinuity(strand: &[Point3<f64>], light: &Vector3<f64>) -> Result<Vec<f64>> {
    let t = strand_tangents(strand)?;
    Ok(t.windows(2)
        .map(|w| (diffuse_intensity(&w[0], light) - diffuse_intensity(&w[1], light)).abs())
        .collect())
}

/// Mean over adjacent pairs of `|a_i I_i − a_{i+1} I_{i+1}|`: the diffuse
/// discontinuity with a per-segment albedo `a`.
pub fn shaded_discontinuity(
    strand: &[Point3<f64>],
    albedo: &[f64],
    light: &Vector3<f64>,
) -> Result<f64> {
    let t = strand_tangents(strand)?;
    assert_eq!(t.len(), albedo.len(), "one albedo per segment");
    let shade: Vec<f64> = t
        .iter()
        .zip(albedo)
        .map(|(t, a)| a * diffuse_intensity(t, light))
        .collect();
    let pairs = shade.len().saturating_sub(1).max(1);
    Ok(shade.windows(2).map(|w| (w[0] - w[1]).abs()).sum::<f64>() / pairs as f64)
}
