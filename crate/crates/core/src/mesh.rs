//! Triangle proxy mesh for the head and upper body.

use std::collections::{HashMap, HashSet};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::strand::HeadPose;

const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMesh", into = "RawMesh")]
pub struct ProxyMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
}

impl TryFrom<RawMesh> for ProxyMesh {
    type Error = CoreError;

    fn try_from(raw: RawMesh) -> Result<Self> {
        ProxyMesh::new(
            raw.vertices.into_iter().map(Point3::from).collect(),
            raw.triangles,
        )
    }
}

impl From<ProxyMesh> for RawMesh {
    fn from(mesh: ProxyMesh) -> Self {
        RawMesh {
            vertices: mesh.vertices.iter().map(|p| [p.x, p.y, p.z]).collect(),
            triangles: mesh.triangles,
        }
    }
}

impl ProxyMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(CoreError::Validation("non-finite mesh vertex".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(CoreError::Validation(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area <= MIN_TRIANGLE_AREA {
                return Err(CoreError::Validation(format!(
                    "triangle {t} is degenerate (area {area:e})"
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, index: usize) -> [Point3<f64>; 3] {
        self.triangles[index].map(|i| self.vertices[i as usize])
    }

    /// Subdivided icosahedron with every vertex on the sphere.
    pub fn icosphere(center: Point3<f64>, radius: f64, subdivisions: u32) -> Self {
        Self::ellipsoid(center, Vector3::repeat(radius), subdivisions)
    }

    /// Icosphere scaled per axis.
    pub fn ellipsoid(center: Point3<f64>, radii: Vector3<f64>, subdivisions: u32) -> Self {
        let (unit, triangles) = unit_icosphere(subdivisions);
        let vertices = unit
            .into_iter()
            .map(|v| center + v.component_mul(&radii))
            .collect();
        Self {
            vertices,
            triangles,
        }
    }

    pub fn transformed(&self, pose: &HeadPose) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| pose.apply(p)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Disjoint union of two meshes.
    pub fn merged(&self, other: &ProxyMesh) -> Self {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        Self {
            vertices,
            triangles,
        }
    }

    /// `V - E + F` summed over the whole mesh.
    pub fn euler_characteristic(&self) -> i64 {
        let used: HashSet<u32> = self.triangles.iter().flatten().copied().collect();
        let edges: HashSet<(u32, u32)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Heuristic closedness test: every edge is shared by exactly two
    /// triangles and the Euler characteristic is even and positive.
    pub fn looks_watertight(&self) -> bool {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let chi = self.euler_characteristic();
        counts.values().all(|&c| c == 2) && chi > 0 && chi % 2 == 0
    }
}

fn unit_icosphere(subdivisions: u32) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (verts[a as usize] + verts[b as usize]).normalize();
                verts.push(m);
                (verts.len() - 1) as u32
            })
        };
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    (verts, tris)
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_genus_zero() {
        for sub in 0..3 {
            let m = ProxyMesh::icosphere(Point3::origin(), 0.5, sub);
            assert_eq!(m.euler_characteristic(), 2);
            assert!(m.looks_watertight());
            for v in m.vertices() {
                assert!((v.coords.norm() - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn merged_spheres_have_two_components() {
        let a = ProxyMesh::icosphere(Point3::origin(), 0.1, 1);
        let b = ProxyMesh::icosphere(Point3::new(1.0, 0.0, 0.0), 0.1, 1);
        let m = a.merged(&b);
        assert_eq!(m.euler_characteristic(), 4);
        assert!(m.looks_watertight());
    }

    #[test]
    fn rejects_bad_triangles() {
        let v = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        assert!(ProxyMesh::new(v.clone(), vec![[0, 1, 2]]).is_err());
        assert!(ProxyMesh::new(v, vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn closest_point_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let face = closest_point_on_triangle(&Point3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert!((face - Point3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let vertex = closest_point_on_triangle(&Point3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(vertex, a);
        let edge = closest_point_on_triangle(&Point3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((edge - Point3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let m = ProxyMesh::icosphere(Point3::new(0.1, 0.2, 0.3), 0.25, 1);
        let s = serde_json::to_string(&m).unwrap();
        let back: ProxyMesh = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
