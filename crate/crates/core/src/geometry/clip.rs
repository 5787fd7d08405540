//! Horizontal-plane clipping and fill-height solving.

use nalgebra::Point3;

use super::mesh::{signed_volume, TriMesh};
use crate::error::{Error, Result};

/// Default fill-height tolerance: 1e-7 m^3 (0.1 ml).
pub const DEFAULT_FILL_TOL: f64 = 1e-7;

const MAX_BISECTIONS: usize = 200;

/// Clips every triangle to the half-space `z <= height` and closes the cut
/// with a cap at `z = height`. The returned soup is closed, so its signed
/// volume is the volume of the mesh interior below the plane.
///
/// Cap triangles fan each cut edge (an edge with both ends on the plane) to a
/// common point on the plane, with the edge reversed so the cap faces +z.
/// Edges shared by two kept faces cancel pairwise.
pub fn clip_below(mesh: &TriMesh, height: f64) -> Vec<[Point3<f64>; 3]> {
    let mut out = Vec::with_capacity(mesh.triangles().len());
    let mut cut_edges: Vec<(Point3<f64>, Point3<f64>)> = Vec::new();
    let mut poly: Vec<Point3<f64>> = Vec::with_capacity(4);

    for tri in mesh.iter_triangles() {
        if tri.iter().all(|p| p.z <= height) {
            out.push(tri);
            collect_cut_edges(&tri, height, &mut cut_edges);
            continue;
        }
        if tri.iter().all(|p| p.z > height) {
            continue;
        }
        poly.clear();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (a_in, b_in) = (a.z <= height, b.z <= height);
            if a_in {
                poly.push(a);
            }
            if a_in != b_in {
                let t = (height - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * t;
                p.z = height;
                poly.push(p);
            }
        }
        if poly.len() < 3 {
            continue;
        }
        for i in 1..poly.len() - 1 {
            out.push([poly[0], poly[i], poly[i + 1]]);
        }
        collect_cut_edges(&poly, height, &mut cut_edges);
    }

    let center = Point3::new(0.0, 0.0, height);
    out.extend(cut_edges.into_iter().map(|(a, b)| [b, a, center]));
    out
}

fn collect_cut_edges(poly: &[Point3<f64>], height: f64, edges: &mut Vec<(Point3<f64>, Point3<f64>)>) {
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        if a.z == height && b.z == height {
            edges.push((a, b));
        }
    }
}

/// Volume (m^3) of the mesh interior below the horizontal plane `z = height`.
pub fn volume_below_plane(mesh: &TriMesh, height: f64) -> f64 {
    let (zmin, zmax) = mesh.z_range();
    if height <= zmin {
        return 0.0;
    }
    if height >= zmax {
        return mesh.volume();
    }
    signed_volume(clip_below(mesh, height)).clamp(0.0, mesh.volume())
}

/// Finds the plane height whose below-plane volume is `target` (m^3) to within
/// `tol` (m^3), by bisection over the mesh's z extent.
pub fn fill_height(mesh: &TriMesh, target: f64, tol: f64) -> Result<f64> {
    let capacity = mesh.volume();
    if !(0.0..=capacity + tol).contains(&target) {
        return Err(Error::VolumeOutOfRange {
            volume: target,
            capacity,
        });
    }
    let (mut lo, mut hi) = mesh.z_range();
    if target <= 0.0 {
        return Ok(lo);
    }
    if target >= capacity {
        return Ok(hi);
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let v = volume_below_plane(mesh, mid);
        if (v - target).abs() <= tol {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
