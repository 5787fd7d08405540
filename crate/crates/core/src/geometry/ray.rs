use nalgebra::{Point3, Unit, Vector3};

use super::mesh::TriMesh;

/// Hits closer than this along the ray are ignored (self-intersection guard).
pub const HIT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: Unit::new_normalize(direction),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction.into_inner() * t
    }

    /// Parameter at which the ray crosses the plane `z = height`, if it does so
    /// in front of the origin.
    pub fn hit_horizontal_plane(&self, height: f64) -> Option<f64> {
        let dz = self.direction.z;
        if dz == 0.0 {
            return None;
        }
        let t = (height - self.origin.z) / dz;
        (t >= 0.0).then_some(t)
    }

    /// Slab test against an axis-aligned box. Returns the entry/exit interval.
    pub fn hit_aabb(&self, lo: &Point3<f64>, hi: &Point3<f64>) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let inv = 1.0 / self.direction[axis];
            let mut a = (lo[axis] - self.origin[axis]) * inv;
            let mut b = (hi[axis] - self.origin[axis]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            // NaN from 0 * inf means the origin lies on the slab boundary
            if !a.is_nan() {
                t0 = t0.max(a);
            }
            if !b.is_nan() {
                t1 = t1.min(b);
            }
        }
        (t0 <= t1 && t1 >= 0.0).then_some((t0, t1))
    }
}

/// Möller–Trumbore ray/triangle test. Two-sided; returns the ray parameter of
/// the hit when it lies beyond [`HIT_EPSILON`].
pub fn ray_triangle(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let [a, b, c] = tri;
    let e1 = b - a;
    let e2 = c - a;
    let d = ray.direction.as_ref();
    let pvec = d.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = d.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t > HIT_EPSILON).then_some(t)
}

/// Nearest hit (smallest positive parameter) over the triangles accepted by
/// `keep`, together with the triangle index.
pub fn first_hit_where<F>(mesh: &TriMesh, ray: &Ray, mut keep: F) -> Option<(f64, usize)>
where
    F: FnMut(usize) -> bool,
{
    let (lo, hi) = mesh.aabb();
    ray.hit_aabb(&lo, &hi)?;
    let mut best: Option<(f64, usize)> = None;
    for (i, tri) in mesh.iter_triangles().enumerate() {
        if !keep(i) {
            continue;
        }
        if let Some(t) = ray_triangle(ray, &tri) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

/// Distance along the ray to the first triangle it hits.
pub fn ray_first_hit(mesh: &TriMesh, ray: &Ray) -> Option<f64> {
    first_hit_where(mesh, ray, |_| true).map(|(t, _)| t)
}
