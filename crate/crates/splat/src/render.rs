//! Differentiable rendering of primitives whose color, opacity and axial
//! scale are tape variables.

use dgh_core::{Camera, Vector3};
use dgh_nn::Var;
use nalgebra::{Matrix2, Vector2};

use crate::error::{Result, SplatError};
use crate::primitive::GaussianPrimitive;
use crate::project::{project_frame, view_direction, Splat2D, COV_FLOOR};
use crate::raster::{conic_of, outer, Raster, RasterStats};

/// Camera-dependent part of a projected primitive. The pixel covariance is
/// `base + axial² · axis axisᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGeometry {
    pub index: usize,
    pub mean: Vector2<f64>,
    pub depth: f64,
    pub base: Matrix2<f64>,
    pub axis: Vector2<f64>,
}

impl SplatGeometry {
    pub fn covariance(&self, axial: f64) -> Matrix2<f64> {
        self.base + outer(&self.axis) * (axial * axial)
    }
}

/// Geometry of every primitive in front of the near plane, plus the view
/// direction of every primitive (culled ones included).
pub fn splat_geometry(
    prims: &[GaussianPrimitive],
    cam: &Camera,
) -> (Vec<SplatGeometry>, Vec<Vector3<f64>>) {
    let mut geo = Vec::with_capacity(prims.len());
    let mut dirs = Vec::with_capacity(prims.len());
    for (i, p) in prims.iter().enumerate() {
        dirs.push(view_direction(cam, &p.mean));
        let Some((pc, mean, jw)) = project_frame(cam, &p.mean) else {
            continue;
        };
        let a = p.rotation.column(0).into_owned();
        let u = jw * a;
        let r2 = p.radial_scale * p.radial_scale;
        let base = (jw * jw.transpose() - outer(&u)) * r2 + Matrix2::identity() * COV_FLOOR;
        geo.push(SplatGeometry {
            index: i,
            mean,
            depth: pc.z,
            base,
            axis: u,
        });
    }
    (geo, dirs)
}

fn column(v: &Var<'_>, p: usize, what: &str) -> Result<()> {
    let s = v.shape();
    if s.iter().product::<usize>() != p || s.first() != Some(&p) {
        return Err(SplatError::Shape(format!(
            "{what}: expected {p} rows, got {s:?}"
        )));
    }
    Ok(())
}

/// Renders `[3, H, W]`. `colors` is `[P, 3]`, `opacity` and `axial` hold one
/// value per primitive; `geometry` indexes into them.
#[allow(clippy::too_many_arguments)]
pub fn render_var<'t>(
    geometry: &[SplatGeometry],
    colors: Var<'t>,
    opacity: Var<'t>,
    axial: Var<'t>,
    background: [f64; 3],
    width: usize,
    height: usize,
) -> Result<(Var<'t>, RasterStats)> {
    let p = colors.shape().first().copied().unwrap_or(0);
    if colors.shape() != [p, 3] {
        return Err(SplatError::Shape(format!(
            "colors: expected [P, 3], got {:?}",
            colors.shape()
        )));
    }
    column(&opacity, p, "opacity")?;
    column(&axial, p, "axial")?;
    if let Some(g) = geometry.iter().find(|g| g.index >= p) {
        return Err(SplatError::Shape(format!(
            "geometry index {} out of {p}",
            g.index
        )));
    }
    let (cv, ov, av) = (colors.value(), opacity.value(), axial.value());
    let splats: Vec<Splat2D> = geometry
        .iter()
        .map(|g| Splat2D {
            index: g.index,
            mean: g.mean,
            cov: g.covariance(av[g.index]),
            depth: g.depth,
            color: [cv[3 * g.index], cv[3 * g.index + 1], cv[3 * g.index + 2]],
            opacity: ov[g.index],
        })
        .collect();
    let raster = Raster::new(&splats, width, height);
    let stats = raster.stats;
    let value = raster.forward(background);
    let tape = colors.tape();
    let (cid, oid, aid) = (colors.id(), opacity.id(), axial.id());
    let axial_of: Vec<f64> = geometry.iter().map(|g| av[g.index]).collect();
    let geo: Vec<(usize, Vector2<f64>)> = geometry.iter().map(|g| (g.index, g.axis)).collect();
    let out = tape.op(
        &[colors, opacity, axial],
        vec![3, height, width],
        value,
        move |g, s| {
            let grads = raster.backward(background, g);
            if let Some(dc) = s.get(cid) {
                for (j, &(i, _)) in geo.iter().enumerate() {
                    for c in 0..3 {
                        dc[3 * i + c] += grads[j].color[c];
                    }
                }
            }
            if let Some(dop) = s.get(oid) {
                for (j, &(i, _)) in geo.iter().enumerate() {
                    dop[i] += grads[j].opacity;
                }
            }
            if let Some(da) = s.get(aid) {
                for (j, &(i, u)) in geo.iter().enumerate() {
                    let gc = grads[j].conic;
                    if gc == [0.0; 3] {
                        continue;
                    }
                    let l = axial_of[j];
                    let Some(conic) = conic_of(&splats[j].cov) else {
                        continue;
                    };
                    let gm = Matrix2::new(gc[0], 0.5 * gc[1], 0.5 * gc[1], gc[2]);
                    let h = -(conic * gm * conic);
                    da[i] += 2.0 * l * (u.transpose() * h * u)[(0, 0)];
                }
            }
        },
    );
    Ok((out, stats))
}
