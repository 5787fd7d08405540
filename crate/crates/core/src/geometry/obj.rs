//! Minimal ASCII OBJ reader/writer: `v x y z` and triangular `f i j k` lines
//! with 1-based indices. Faces may use the `i/t/n` form; only the vertex index
//! is read. Other statements are ignored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::mesh::TriMesh;
use crate::error::{Error, Result};

pub fn parse_obj(name: &str, text: &str, path: &Path) -> Result<TriMesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() < 3 {
                    return Err(err(lineno, "vertex needs three coordinates".into()));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or("");
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(err(lineno, format!("bad face index {f:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(
                        lineno,
                        format!("only triangles are supported, got {} indices", idx.len()),
                    ));
                }
                if let Some(&bad) = idx.iter().find(|&&i| i >= vertices.len()) {
                    return Err(err(lineno, format!("face references undefined vertex {}", bad + 1)));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriMesh::new(name, vertices, triangles).map_err(|e| Error::format(path, e.to_string()))
}

/// Loads a mesh, naming it after the file stem.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&name, &text, path)
}

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut out = format!("# {}\n", mesh.name());
    for p in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_obj(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn round_trip_is_exact() {
        let m = shapes::cylinder(0.04, 0.12, 24);
        let back = parse_obj("cyl", &to_obj(&m), Path::new("mem.obj")).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
    }

    #[test]
    fn reports_line_numbers() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n";
        match parse_obj("t", text, Path::new("t.obj")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let text = "v 0 0 0\nf 1 2 3\n";
        assert!(matches!(
            parse_obj("t", text, Path::new("t.obj")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn open_surface_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let err = parse_obj("t", text, Path::new("t.obj")).unwrap_err();
        assert!(err.to_string().contains("not watertight"), "{err}");
    }

    #[test]
    fn slash_faces_and_comments() {
        let text = "# tet\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n\
                    f 1/1/1 3/1/1 2/1/1\nf 1 2 4 # side\nf 1 4 3\nf 2 3 4\n";
        let m = parse_obj("tet", text, Path::new("t.obj")).unwrap();
        assert!((m.volume() - 1.0 / 6.0).abs() < 1e-15);
    }
}
