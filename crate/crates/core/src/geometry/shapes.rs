//! Procedural fixtures: boxes, prisms, cylinders, frusta and icospheres.
//!
//! Containers are generated upright with the base at `z = 0` and the axis on
//! the z axis. The flat top face of a container is its rim cap.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::Point3;

use super::mesh::TriMesh;

fn build(name: &str, vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> TriMesh {
    TriMesh::new(name, vertices, triangles).expect("procedural mesh is valid")
}

/// Axis-aligned box spanning `lo..hi`.
pub fn cuboid(lo: Point3<f64>, hi: Point3<f64>) -> TriMesh {
    let v = |x: bool, y: bool, z: bool| {
        Point3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let vertices = vec![
        v(false, false, false),
        v(true, false, false),
        v(true, true, false),
        v(false, true, false),
        v(false, false, true),
        v(true, false, true),
        v(true, true, true),
        v(false, true, true),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    build("cuboid", vertices, triangles)
}

/// Cube with one corner at the origin.
pub fn cube(side: f64) -> TriMesh {
    cuboid(Point3::origin(), Point3::new(side, side, side))
}

/// The unit right tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1).
pub fn tetrahedron() -> TriMesh {
    let vertices = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
    ];
    build(
        "tetrahedron",
        vertices,
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    )
}

/// Right triangular prism over (0,0), (1,0), (0,1) with unit height.
pub fn prism() -> TriMesh {
    let base = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
    let vertices = [0.0, 1.0]
        .iter()
        .flat_map(|&z| base.iter().map(move |&(x, y)| Point3::new(x, y, z)))
        .collect();
    let triangles = vec![
        [0, 2, 1],
        [3, 4, 5],
        [0, 1, 4],
        [0, 4, 3],
        [1, 2, 5],
        [1, 5, 4],
        [2, 0, 3],
        [2, 3, 5],
    ];
    build("prism", vertices, triangles)
}

/// Closed truncated cone: base radius `r_bottom` at z = 0, top radius `r_top`
/// at z = `height`. Caps are fans around a center vertex.
pub fn frustum(r_bottom: f64, r_top: f64, height: f64, segments: usize) -> TriMesh {
    assert!(segments >= 3);
    let n = segments;
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for (r, z) in [(r_bottom, 0.0), (r_top, height)] {
        for i in 0..n {
            let a = TAU * i as f64 / n as f64;
            vertices.push(Point3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, 0.0));
    vertices.push(Point3::new(0.0, 0.0, height));
    let (bc, tc) = (2 * n, 2 * n + 1);

    let mut triangles = Vec::with_capacity(4 * n);
    for i in 0..n {
        let j = (i + 1) % n;
        let (b0, b1, t0, t1) = (i, j, n + i, n + j);
        triangles.push([b0, b1, t1]);
        triangles.push([b0, t1, t0]);
        triangles.push([bc, b1, b0]);
        triangles.push([tc, t0, t1]);
    }
    build("frustum", vertices, triangles)
}

pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriMesh {
    frustum(radius, radius, height, segments).with_name("cylinder")
}

/// Icosahedron subdivided `subdivisions` times, projected onto a sphere
/// centered at the origin.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(nalgebra::Vector3::new(x, y, z).normalize() * radius))
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
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
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (vertices[a].coords + vertices[b].coords).normalize() * radius;
                vertices.push(Point3::from(m));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    build("icosphere", vertices, triangles)
}
