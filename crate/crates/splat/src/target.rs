//! A fixed reference look for toy appearance targets.

use dgh_core::{Camera, Groom, Image, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::primitive::{init_primitives, GaussianPrimitive};
use crate::project::project_all;
use crate::raster::rasterize;
use crate::sh::rgb_to_dc;

/// Color runs from `root` to `tip` along each strand and is shaded by
/// `ambient + (1 − ambient)·|t·l|`.
///
/// With `subdivisions > 1` strands are first refined by Catmull-Rom
/// interpolation, so the look is rendered from shorter segments whose
/// tangents vary smoothly through bends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyLook {
    pub root: [f64; 3],
    pub tip: [f64; 3],
    pub light: [f64; 3],
    pub ambient: f64,
    pub opacity: f64,
    pub subdivisions: usize,
}

impl Default for ToyLook {
    fn default() -> Self {
        Self {
            root: [0.25, 0.12, 0.05],
            tip: [0.9, 0.7, 0.35],
            light: [0.3, -0.5, 0.8],
            ambient: 0.35,
            opacity: 0.9,
            subdivisions: 4,
        }
    }
}

impl ToyLook {
    /// Strand mean color, used as the untrained base color.
    pub fn mean_color(&self) -> [f64; 3] {
        std::array::from_fn(|c| 0.5 * (self.root[c] + self.tip[c]))
    }

    /// The groom the look is rendered from.
    pub fn refine(&self, groom: &Groom) -> Result<Groom> {
        let k = self.subdivisions.max(1);
        if k == 1 {
            return Ok(groom.clone());
        }
        let n = groom.vertices_per_strand();
        let mut points = Vec::with_capacity(groom.strand_count() * ((n - 1) * k + 1));
        for s in groom.strands() {
            for j in 0..n - 1 {
                let p0 = s[j.saturating_sub(1)].coords;
                let p1 = s[j].coords;
                let p2 = s[j + 1].coords;
                let p3 = s[(j + 2).min(n - 1)].coords;
                for m in 0..k {
                    let u = m as f64 / k as f64;
                    let (u2, u3) = (u * u, u * u * u);
                    let c = 0.5
                        * (2.0 * p1
                            + (p2 - p0) * u
                            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
                            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3);
                    points.push(c.into());
                }
            }
            points.push(s[n - 1]);
        }
        Ok(Groom::from_points((n - 1) * k + 1, points)?)
    }

    pub fn primitives(&self, groom: &Groom) -> Result<Vec<GaussianPrimitive>> {
        let groom = &self.refine(groom)?;
        let mut prims = init_primitives(groom, [0.0; 3])?;
        let per = groom.vertices_per_strand() - 1;
        let l = Vector3::from(self.light).normalize();
        for (i, p) in prims.iter_mut().enumerate() {
            let s = (i % per) as f64 / (per.max(2) - 1) as f64;
            let shade = self.ambient + (1.0 - self.ambient) * p.tangent.dot(&l).abs();
            for c in 0..3 {
                let base = self.root[c] * (1.0 - s) + self.tip[c] * s;
                p.sh[c] = rgb_to_dc((base * shade).clamp(0.0, 1.0));
            }
            p.opacity = self.opacity;
        }
        Ok(prims)
    }

    pub fn render(&self, groom: &Groom, cam: &Camera, background: [f64; 3]) -> Result<Image> {
        let prims = self.primitives(groom)?;
        Ok(rasterize(&project_all(&prims, cam), background, cam.width, cam.height).0)
    }
}
