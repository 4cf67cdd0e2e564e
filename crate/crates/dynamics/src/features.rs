//! Per-point network inputs shared by both stages.

use dgh_core::volume::{encoding_width, positional_encoding, voxelize_points};
use dgh_core::{FeatureVolume, GridSpec, HeadPose, Point3, Vector3};
use dgh_nn::{Tape, Var};

use crate::config::POSE_WIDTH;
use crate::error::{DynError, Result};

/// Maps `p` so that the grid's voxel centers span `[-1, 1]` per axis.
pub fn grid_normalized(grid: &GridSpec, p: &Point3<f64>) -> [f64; 3] {
    let mut out = [0.0; 3];
    for a in 0..3 {
        let span = (grid.resolution[a] - 1) as f64 * grid.voxel_size;
        out[a] = 2.0 * (p[a] - grid.origin[a]) / span - 1.0;
    }
    out
}

/// `[N, 6L]` encodings of grid-normalized positions.
pub(crate) fn encoding_rows(
    grid: &GridSpec,
    points: &[Point3<f64>],
    frequencies: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * encoding_width(3, frequencies));
    for p in points {
        out.extend(positional_encoding(&grid_normalized(grid, p), frequencies));
    }
    out
}

pub(crate) fn pose_rows(pose: &HeadPose, n: usize) -> Vec<f64> {
    let f = pose.features();
    let mut out = Vec::with_capacity(n * POSE_WIDTH);
    for _ in 0..n {
        out.extend_from_slice(&f);
    }
    out
}

pub(crate) fn point_rows(points: &[Point3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub(crate) fn vector_rows(v: &[Vector3<f64>], scale: f64) -> Vec<f64> {
    v.iter()
        .flat_map(|d| [d.x * scale, d.y * scale, d.z * scale])
        .collect()
}

pub(crate) fn rows_to_vectors(rows: &[f64]) -> Vec<Vector3<f64>> {
    rows.chunks_exact(3)
        .map(|r| Vector3::new(r[0], r[1], r[2]))
        .collect()
}

/// The volume as a `[C, D, H, W]` constant (x fastest).
pub(crate) fn volume_var<'t>(tape: &'t Tape, vol: &FeatureVolume) -> Var<'t> {
    let [nx, ny, nz] = vol.spec().resolution;
    tape.constant(&[vol.channels(), nz, ny, nx], vol.data().to_vec())
}

pub(crate) fn check_grid(vol: &FeatureVolume, grid: &GridSpec, what: &str) -> Result<()> {
    if !vol.spec().matches_stored(grid) || vol.channels() != 1 {
        return Err(DynError::Shape(format!(
            "{what}: expected a 1-channel volume on {grid:?}, got {} channels on {:?}",
            vol.channels(),
            vol.spec()
        )));
    }
    Ok(())
}

/// Truncated unsigned distance to the hair points.
pub fn hair_volume(
    points: &[Point3<f64>],
    grid: &GridSpec,
    truncation_voxels: f64,
) -> Result<FeatureVolume> {
    Ok(voxelize_points(
        points,
        grid,
        truncation_voxels * grid.voxel_size,
    )?)
}

pub(crate) fn gather<T: Clone>(items: &[T], index: &[usize]) -> Vec<T> {
    index.iter().map(|&i| items[i].clone()).collect()
}
