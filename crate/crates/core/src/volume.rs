//! Dense voxel grids: distance-field voxelization, trilinear sampling and
//! positional encoding.
//!
//! Voxel `(x, y, z)` has its center at `origin + (x, y, z) * voxel_size`.
//! Data is stored channel-planar with x fastest:
//! `index = ((c * nz + z) * ny + y) * nx + x`.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mesh::{closest_point_on_triangle, ProxyMesh};

/// Default truncation for unsigned hair distance, in voxels.
pub const DEFAULT_TRUNCATION_VOXELS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub resolution: [usize; 3],
    pub origin: [f64; 3],
    pub voxel_size: f64,
}

impl GridSpec {
    pub fn new(resolution: [usize; 3], origin: [f64; 3], voxel_size: f64) -> Result<Self> {
        let spec = Self {
            resolution,
            origin,
            voxel_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Cubic grid of `n` voxels per axis whose centers span `center ± half_extent`.
    pub fn cube(center: [f64; 3], half_extent: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::Validation(format!("grid resolution {n} < 2")));
        }
        let h = 2.0 * half_extent / (n - 1) as f64;
        Self::new(
            [n; 3],
            [
                center[0] - half_extent,
                center[1] - half_extent,
                center[2] - half_extent,
            ],
            h,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.iter().any(|&n| n < 2) {
            return Err(CoreError::Validation(format!(
                "grid resolution {:?} must be >= 2 per axis",
                self.resolution
            )));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(CoreError::Validation(format!(
                "voxel size must be positive, got {}",
                self.voxel_size
            )));
        }
        if !self.origin.iter().all(|c| c.is_finite()) {
            return Err(CoreError::Validation("non-finite grid origin".into()));
        }
        Ok(())
    }

    /// Equal once origin and voxel size are rounded to f32, the precision
    /// volume files store.
    pub fn matches_stored(&self, other: &GridSpec) -> bool {
        let q = |v: f64| v as f32;
        self.resolution == other.resolution
            && q(self.voxel_size) == q(other.voxel_size)
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| q(*a) == q(*b))
    }

    pub fn voxel_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Point3<f64> {
        Point3::new(
            self.origin[0] + x as f64 * self.voxel_size,
            self.origin[1] + y as f64 * self.voxel_size,
            self.origin[2] + z as f64 * self.voxel_size,
        )
    }

    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, _] = self.resolution;
        (z * ny + y) * nx + x
    }

    /// Trilinear stencil of `p`, clamped to the grid hull.
    pub fn stencil(&self, p: &Point3<f64>) -> Stencil {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let mut live = [0.0f64; 3];
        for axis in 0..3 {
            let n = self.resolution[axis];
            let g = (p[axis] - self.origin[axis]) / self.voxel_size;
            let hi = (n - 1) as f64;
            let (g, inside) = if g <= 0.0 {
                (0.0, false)
            } else if g >= hi {
                (hi, false)
            } else {
                (g, true)
            };
            let i0 = (g.floor() as usize).min(n - 2);
            base[axis] = i0;
            frac[axis] = g - i0 as f64;
            live[axis] = if inside { 1.0 / self.voxel_size } else { 0.0 };
        }
        let mut st = Stencil {
            offsets: [0; 8],
            weights: [0.0; 8],
            dweights: [[0.0; 3]; 8],
        };
        for k in 0..8 {
            let bit = [k & 1, (k >> 1) & 1, (k >> 2) & 1];
            let factor: [f64; 3] =
                std::array::from_fn(|a| if bit[a] == 1 { frac[a] } else { 1.0 - frac[a] });
            let slope: [f64; 3] = std::array::from_fn(|a| if bit[a] == 1 { 1.0 } else { -1.0 });
            st.offsets[k] = self.linear_index(base[0] + bit[0], base[1] + bit[1], base[2] + bit[2]);
            st.weights[k] = factor[0] * factor[1] * factor[2];
            st.dweights[k] = [
                slope[0] * live[0] * factor[1] * factor[2],
                factor[0] * slope[1] * live[1] * factor[2],
                factor[0] * factor[1] * slope[2] * live[2],
            ];
        }
        st
    }
}

/// The 8 voxels surrounding a point and their trilinear weights.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    /// Voxel indices within one channel plane.
    pub offsets: [usize; 8],
    pub weights: [f64; 8],
    /// d(weight)/d(p), zero along clamped axes.
    pub dweights: [[f64; 3]; 8],
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    spec: GridSpec,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureVolume {
    pub fn new(spec: GridSpec, channels: usize, data: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if channels == 0 {
            return Err(CoreError::Validation(
                "volume needs at least one channel".into(),
            ));
        }
        if data.len() != spec.voxel_count() * channels {
            return Err(CoreError::Shape(format!(
                "volume data has {} entries, expected {}",
                data.len(),
                spec.voxel_count() * channels
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Validation("non-finite volume entry".into()));
        }
        Ok(Self {
            spec,
            channels,
            data,
        })
    }

    pub fn zeros(spec: GridSpec, channels: usize) -> Self {
        Self {
            spec,
            channels,
            data: vec![0.0; spec.voxel_count() * channels],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(Point3<f64>) -> f64) -> Self {
        let [nx, ny, nz] = spec.resolution;
        let mut data = Vec::with_capacity(spec.voxel_count());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(spec.voxel_center(x, y, z)));
                }
            }
        }
        Self {
            spec,
            channels: 1,
            data,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, x: usize, y: usize, z: usize) -> f64 {
        self.data[c * self.spec.voxel_count() + self.spec.linear_index(x, y, z)]
    }

    /// Spatial gradient of channel `c` of the trilinear interpolant.
    pub fn gradient(&self, c: usize, p: &Point3<f64>) -> Vector3<f64> {
        let st = self.spec.stencil(p);
        let plane = &self.data[c * self.spec.voxel_count()..];
        let mut g = Vector3::zeros();
        for k in 0..8 {
            let v = plane[st.offsets[k]];
            g += Vector3::from(st.dweights[k]) * v;
        }
        g
    }
}

/// Unsigned distance from each voxel center to the nearest point, truncated.
///
/// Uses a uniform bucket grid with cell size `truncation`; the result is
/// bit-identical to an exhaustive scan.
pub fn voxelize_points(
    points: &[Point3<f64>],
    spec: &GridSpec,
    truncation: f64,
) -> Result<FeatureVolume> {
    spec.validate()?;
    if points.is_empty() {
        return Err(CoreError::Empty("cannot voxelize an empty point set"));
    }
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(CoreError::Validation(format!(
            "truncation must be positive, got {truncation}"
        )));
    }
    let buckets = Buckets::new(points, truncation);
    let [nx, ny, _] = spec.resolution;
    let plane = nx * ny;
    let mut data = vec![0.0; spec.voxel_count()];
    data.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(z, slab)| {
            for y in 0..ny {
                for x in 0..nx {
                    let c = spec.voxel_center(x, y, z);
                    slab[y * nx + x] = buckets.nearest_within(points, &c, truncation);
                }
            }
        });
    Ok(FeatureVolume {
        spec: *spec,
        channels: 1,
        data,
    })
}

/// Distance between two points, computed component-wise.
#[inline]
pub fn point_distance(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

struct Buckets {
    cell: f64,
    lo: [i64; 3],
    dims: [i64; 3],
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl Buckets {
    fn new(points: &[Point3<f64>], cell: f64) -> Self {
        let key =
            |p: &Point3<f64>| -> [i64; 3] { std::array::from_fn(|a| (p[a] / cell).floor() as i64) };
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for p in points {
            let k = key(p);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
        }
        let dims: [i64; 3] = std::array::from_fn(|a| hi[a] - lo[a] + 1);
        let total = (dims[0] * dims[1] * dims[2]) as usize;
        let flat = |k: [i64; 3]| -> usize {
            (((k[2] - lo[2]) * dims[1] + (k[1] - lo[1])) * dims[0] + (k[0] - lo[0])) as usize
        };
        let mut counts = vec![0usize; total + 1];
        for p in points {
            counts[flat(key(p)) + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut members = vec![0usize; points.len()];
        for (i, p) in points.iter().enumerate() {
            let b = flat(key(p));
            members[fill[b]] = i;
            fill[b] += 1;
        }
        Self {
            cell,
            lo,
            dims,
            starts: counts,
            members,
        }
    }

    fn nearest_within(&self, points: &[Point3<f64>], q: &Point3<f64>, truncation: f64) -> f64 {
        let mut best = truncation;
        let k: [i64; 3] = std::array::from_fn(|a| (q[a] / self.cell).floor() as i64);
        for dz in -1..=1 {
            let z = k[2] + dz - self.lo[2];
            if z < 0 || z >= self.dims[2] {
                continue;
            }
            for dy in -1..=1 {
                let y = k[1] + dy - self.lo[1];
                if y < 0 || y >= self.dims[1] {
                    continue;
                }
                for dx in -1..=1 {
                    let x = k[0] + dx - self.lo[0];
                    if x < 0 || x >= self.dims[0] {
                        continue;
                    }
                    let b = ((z * self.dims[1] + y) * self.dims[0] + x) as usize;
                    for &i in &self.members[self.starts[b]..self.starts[b + 1]] {
                        let d = point_distance(q, &points[i]);
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
        }
        best
    }
}

/// Signed distance to a closed mesh, negative inside.
///
/// Magnitude is the exact point-triangle distance (BVH accelerated); the sign
/// comes from ray parity along +x, one ray per grid row.
pub fn voxelize_mesh(mesh: &ProxyMesh, spec: &GridSpec) -> Result<FeatureVolume> {
    spec.validate()?;
    if mesh.is_empty() {
        return Err(CoreError::Empty("cannot voxelize an empty mesh"));
    }
    if !mesh.looks_watertight() {
        log::warn!(
            "proxy mesh does not look watertight (euler characteristic {}); sign may be wrong",
            mesh.euler_characteristic()
        );
    }
    let bvh = TriangleBvh::new(mesh);
    let [nx, ny, _] = spec.resolution;
    let plane = nx * ny;
    let x_start = spec.origin[0] - spec.voxel_size;
    let mut data = vec![0.0; spec.voxel_count()];
    data.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(z, slab)| {
            let mut hits = Vec::new();
            let mut stack = Vec::new();
            for y in 0..ny {
                let row = spec.voxel_center(0, y, z);
                row_crossings(mesh, row.y, row.z, x_start, &mut hits);
                let mut prev = f64::INFINITY;
                for x in 0..nx {
                    let c = spec.voxel_center(x, y, z);
                    // Distance is 1-Lipschitz, so the previous voxel bounds the search.
                    let bound = (prev + spec.voxel_size) * (1.0 + 1e-6);
                    let d = bvh.distance_within(mesh, &c, bound * bound, &mut stack);
                    prev = d;
                    let behind = hits.iter().filter(|&&h| h < c.x).count();
                    slab[y * nx + x] = if behind % 2 == 1 { -d } else { d };
                }
            }
        });
    Ok(FeatureVolume {
        spec: *spec,
        channels: 1,
        data,
    })
}

/// Unsigned distance from `p` to the nearest triangle of `mesh`.
pub fn mesh_distance(mesh: &ProxyMesh, p: &Point3<f64>) -> f64 {
    TriangleBvh::new(mesh).distance(mesh, p)
}

/// x coordinates where the ray `(x_start.., y, z)` crosses the mesh, sorted.
/// Rays that graze an edge or vertex are nudged by a fixed jitter sequence.
fn row_crossings(mesh: &ProxyMesh, y: f64, z: f64, x_start: f64, hits: &mut Vec<f64>) {
    const JITTER: [(f64, f64); 4] = [
        (0.0, 0.0),
        (3.1e-9, 1.7e-9),
        (-2.3e-9, 4.1e-9),
        (5.3e-9, -3.7e-9),
    ];
    for (jy, jz) in JITTER {
        hits.clear();
        if cast_row(mesh, y + jy, z + jz, x_start, hits) {
            hits.sort_by(f64::total_cmp);
            return;
        }
    }
    hits.sort_by(f64::total_cmp);
}

/// Returns false when the ray passes within tolerance of an edge.
fn cast_row(mesh: &ProxyMesh, y: f64, z: f64, x_start: f64, hits: &mut Vec<f64>) -> bool {
    const EDGE_EPS: f64 = 1e-12;
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(t);
        // Projected area in the yz plane.
        let area = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
        if area.abs() < 1e-18 {
            continue;
        }
        let w0 = (b.y - y) * (c.z - z) - (c.y - y) * (b.z - z);
        let w1 = (c.y - y) * (a.z - z) - (a.y - y) * (c.z - z);
        let w2 = (a.y - y) * (b.z - z) - (b.y - y) * (a.z - z);
        let (u, v, w) = (w0 / area, w1 / area, w2 / area);
        if u < -EDGE_EPS || v < -EDGE_EPS || w < -EDGE_EPS {
            continue;
        }
        if u < EDGE_EPS || v < EDGE_EPS || w < EDGE_EPS {
            return false;
        }
        let x = u * a.x + v * b.x + w * c.x;
        if x > x_start {
            hits.push(x);
        }
    }
    true
}

struct BvhNode {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Leaf: `start..start+count` into `order`. Inner: children at `start`, `start+1`.
    start: usize,
    count: usize,
}

struct TriangleBvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

impl TriangleBvh {
    const LEAF_SIZE: usize = 4;

    fn new(mesh: &ProxyMesh) -> Self {
        let n = mesh.triangles().len();
        let bounds: Vec<(Vector3<f64>, Vector3<f64>)> = (0..n)
            .map(|t| {
                let [a, b, c] = mesh.triangle(t);
                (
                    a.coords.inf(&b.coords).inf(&c.coords),
                    a.coords.sup(&b.coords).sup(&c.coords),
                )
            })
            .collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * n / Self::LEAF_SIZE + 1),
            order: (0..n).collect(),
        };
        bvh.nodes.push(BvhNode {
            lo: Vector3::zeros(),
            hi: Vector3::zeros(),
            start: 0,
            count: 0,
        });
        bvh.build(0, 0, n, &bounds);
        bvh
    }

    fn build(
        &mut self,
        node: usize,
        start: usize,
        end: usize,
        bounds: &[(Vector3<f64>, Vector3<f64>)],
    ) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..end] {
            lo = lo.inf(&bounds[t].0);
            hi = hi.sup(&bounds[t].1);
        }
        self.nodes[node].lo = lo;
        self.nodes[node].hi = hi;
        if end - start <= Self::LEAF_SIZE {
            self.nodes[node].start = start;
            self.nodes[node].count = end - start;
            return;
        }
        let extent = hi - lo;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| {
            let ca = bounds[a].0[axis] + bounds[a].1[axis];
            let cb = bounds[b].0[axis] + bounds[b].1[axis];
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(BvhNode {
                lo: Vector3::zeros(),
                hi: Vector3::zeros(),
                start: 0,
                count: 0,
            });
        }
        self.nodes[node].start = left;
        self.nodes[node].count = 0;
        self.build(left, start, mid, bounds);
        self.build(left + 1, mid, end, bounds);
    }

    fn box_distance_sq(node: &BvhNode, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < node.lo[a] {
                node.lo[a] - p[a]
            } else if p[a] > node.hi[a] {
                p[a] - node.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    fn distance(&self, mesh: &ProxyMesh, p: &Point3<f64>) -> f64 {
        self.distance_within(mesh, p, f64::INFINITY, &mut Vec::new())
    }

    /// Exact distance, given that it is known to be below `sqrt(bound_sq)`.
    fn distance_within(
        &self,
        mesh: &ProxyMesh,
        p: &Point3<f64>,
        bound_sq: f64,
        stack: &mut Vec<usize>,
    ) -> f64 {
        let mut best_sq = bound_sq;
        let mut exact = f64::INFINITY;
        stack.clear();
        stack.push(0);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if Self::box_distance_sq(node, p) >= best_sq {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = mesh.triangle(t);
                    let q = closest_point_on_triangle(p, &a, &b, &c);
                    let d = (p - q).norm_squared();
                    if d < best_sq {
                        best_sq = d;
                    }
                    if d < exact {
                        exact = d;
                    }
                }
            } else {
                let (l, r) = (node.start, node.start + 1);
                let dl = Self::box_distance_sq(&self.nodes[l], p);
                let dr = Self::box_distance_sq(&self.nodes[r], p);
                // Visit the nearer child first.
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        exact.sqrt()
    }
}

/// Trilinear blend of the 8 voxels around `p`, one value per channel.
/// Points outside the grid are clamped to the boundary.
pub fn sample_trilinear(vol: &FeatureVolume, p: &Point3<f64>) -> Vec<f64> {
    let st = vol.spec.stencil(p);
    let n = vol.spec.voxel_count();
    (0..vol.channels)
        .map(|c| {
            let plane = &vol.data[c * n..(c + 1) * n];
            (0..8).map(|k| st.weights[k] * plane[st.offsets[k]]).sum()
        })
        .collect()
}

/// NeRF-style encoding: for each frequency f in 0..L and each component j,
/// `sin(2^f π v_j), cos(2^f π v_j)`.
pub fn positional_encoding(v: &[f64], frequencies: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoding_width(v.len(), frequencies));
    for f in 0..frequencies {
        let scale = (1u64 << f) as f64 * PI;
        for &x in v {
            let (s, c) = (scale * x).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    out
}

pub fn encoding_width(dims: usize, frequencies: usize) -> usize {
    2 * frequencies * dims
}

/// Penetration depth `max(0, -sdf(p))`.
pub fn sdf_penetration(sdf: &FeatureVolume, p: &Point3<f64>) -> f64 {
    (-sample_trilinear(sdf, p)[0]).max(0.0)
}
