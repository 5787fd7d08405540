use std::collections::HashMap;

use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{Error, Result};

/// Triangles with a smaller area than this are rejected at construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

/// A watertight, consistently wound triangle mesh. Coordinates are meters.
///
/// Every edge is shared by exactly two triangles that traverse it in opposite
/// directions, and the enclosed signed volume is positive (outward normals).
/// These are checked once in [`TriMesh::new`]; afterwards the mesh is immutable.
#[derive(Debug, Clone)]
pub struct TriMesh {
    name: String,
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    volume: f64,
    aabb: (Point3<f64>, Point3<f64>),
}

impl TriMesh {
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let n = vertices.len();
        for (ti, tri) in triangles.iter().enumerate() {
            for &vi in tri {
                if vi >= n {
                    return Err(Error::VertexIndexOutOfRange(ti, vi, n));
                }
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if !(area >= MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { index: ti, area });
            }
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut edges: Vec<_> = directed.iter().map(|(&e, &c)| (e, c)).collect();
        edges.sort_unstable();
        for ((a, b), count) in edges {
            let reverse = directed.get(&(b, a)).copied().unwrap_or(0);
            if count + reverse != 2 {
                let (lo, hi) = (a.min(b), a.max(b));
                return Err(Error::NonWatertightMesh(lo, hi, count + reverse));
            }
            if count != 1 {
                return Err(Error::InconsistentWinding(a, b));
            }
        }

        let volume = signed_volume(triangles.iter().map(|t| t.map(|i| vertices[i])));
        if !(volume > 0.0) {
            return Err(Error::NonPositiveVolume(volume));
        }
        let aabb = bounds(&vertices);
        Ok(Self {
            name: name.into(),
            vertices,
            triangles,
            volume,
            aabb,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, index: usize) -> [Point3<f64>; 3] {
        self.triangles[index].map(|i| self.vertices[i])
    }

    pub fn iter_triangles(&self) -> impl Iterator<Item = [Point3<f64>; 3]> + '_ {
        self.triangles.iter().map(|t| t.map(|i| self.vertices[i]))
    }

    /// Enclosed volume in cubic meters.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Smallest and largest z over all vertices.
    pub fn z_range(&self) -> (f64, f64) {
        (self.aabb.0.z, self.aabb.1.z)
    }

    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        self.aabb
    }

    /// Applies a rigid transform. Volume and topology are unchanged.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let vertices: Vec<_> = self.vertices.iter().map(|p| iso * p).collect();
        let volume = signed_volume(self.triangles.iter().map(|t| t.map(|i| vertices[i])));
        Self {
            name: self.name.clone(),
            aabb: bounds(&vertices),
            vertices,
            triangles: self.triangles.clone(),
            volume,
        }
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        self.transformed(&Isometry3::translation(offset.x, offset.y, offset.z))
    }

    /// Outward unit normal of a triangle.
    pub fn normal(&self, index: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(index);
        (b - a).cross(&(c - a)).normalize()
    }
}

fn bounds(vertices: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::from([f64::INFINITY; 3]);
    let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
    for p in vertices {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Signed volume of a tetrahedron with apex at the origin.
#[inline]
pub fn tetra_signed_volume(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
}

/// Sum of origin-apex tetrahedron volumes over a triangle soup. Equals the
/// enclosed volume when the soup bounds a closed, outward-wound region.
pub fn signed_volume<I>(triangles: I) -> f64
where
    I: IntoIterator<Item = [Point3<f64>; 3]>,
{
    triangles
        .into_iter()
        .map(|[a, b, c]| tetra_signed_volume(&a, &b, &c))
        .sum()
}

/// Enclosed volume of a watertight mesh, in cubic meters.
pub fn mesh_volume(mesh: &TriMesh) -> f64 {
    mesh.volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn rejects_open_mesh() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let err = TriMesh::new("tri", v, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::NonWatertightMesh(..)));
    }

    #[test]
    fn rejects_flipped_face() {
        let tet = shapes::tetrahedron();
        let mut tris = tet.triangles().to_vec();
        tris[0].swap(1, 2);
        let err = TriMesh::new("bad", tet.vertices().to_vec(), tris).unwrap_err();
        assert!(matches!(err, Error::InconsistentWinding(..)));
    }

    #[test]
    fn rejects_inverted_mesh() {
        let tet = shapes::tetrahedron();
        let tris = tet.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
        let err = TriMesh::new("inv", tet.vertices().to_vec(), tris).unwrap_err();
        assert!(matches!(err, Error::NonPositiveVolume(_)));
    }

    #[test]
    fn rejects_bad_index_and_degenerate() {
        let tet = shapes::tetrahedron();
        let mut tris = tet.triangles().to_vec();
        tris[1][2] = 17;
        let err = TriMesh::new("idx", tet.vertices().to_vec(), tris).unwrap_err();
        assert!(matches!(err, Error::VertexIndexOutOfRange(1, 17, 4)));

        let mut verts = tet.vertices().to_vec();
        verts[3] = Point3::new(1e-15, 1e-15, 0.0);
        let err = TriMesh::new("flat", verts, tet.triangles().to_vec()).unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle { .. }));
    }

    #[test]
    fn unit_cube_and_tetrahedron() {
        assert!((mesh_volume(&shapes::cube(1.0)) - 1.0).abs() < 1e-15);
        assert!((mesh_volume(&shapes::tetrahedron()) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn cube_volume_scales_cubically() {
        for s in [0.01, 0.1, 1.0] {
            let v = mesh_volume(&shapes::cube(s));
            assert!(((v - s * s * s) / (s * s * s)).abs() < 1e-12, "side {s}: {v}");
        }
    }

    #[test]
    fn icosphere_matches_analytic_volume() {
        let r = 0.05;
        let v = mesh_volume(&shapes::icosphere(r, 4));
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        assert!(((v - exact) / exact).abs() < 0.005, "{v} vs {exact}");
    }

    #[test]
    fn volume_is_translation_invariant() {
        let m = shapes::cylinder(0.04, 0.12, 64);
        let moved = m.translated(Vector3::new(3.0, -2.0, 7.5));
        let rel = (moved.volume() - m.volume()).abs() / m.volume();
        assert!(rel < 1e-10, "{rel}");
    }
}
