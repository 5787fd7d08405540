use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::ray::{first_hit_where, Ray};
use crate::error::{Error, Result};

/// Pinhole camera. Camera frame is x right, y down, z forward; `pose` maps
/// camera coordinates to world coordinates. Integer pixel coordinates are
/// pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: Isometry3<f64>,
}

/// Pinhole intrinsics, as stored in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, pose: Isometry3<f64>) -> Result<Self> {
        let Intrinsics {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        } = intrinsics;
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("empty image".into()));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !((0.0..width as f64).contains(&cx) && (0.0..height as f64).contains(&cy)) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        let r = pose.rotation.to_rotation_matrix().into_inner();
        let ortho = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCamera("pose rotation is not proper".into()));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            pose,
        })
    }

    /// Camera at `eye` looking at `target`, with image "up" toward `up`.
    pub fn look_at(
        intrinsics: Intrinsics,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(Error::InvalidCamera("view direction parallel to up".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Rotation3::from_basis_unchecked(&[right, down, forward]);
        let pose = Isometry3::from_parts(
            Translation3::from(eye.coords),
            UnitQuaternion::from_rotation_matrix(&rot),
        );
        Self::new(intrinsics, pose)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// World-frame ray through image point `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Result<Ray> {
        if !((0.0..self.width as f64).contains(&u) && (0.0..self.height as f64).contains(&v)) {
            return Err(Error::PixelOutOfBounds(u, v));
        }
        let dir_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        Ok(Ray::new(
            Point3::from(self.pose.translation.vector),
            self.pose.rotation * dir_cam,
        ))
    }

    /// Rays through every pixel center in row-major order.
    pub fn rays(&self) -> impl Iterator<Item = Ray> + '_ {
        (0..self.height).flat_map(move |v| {
            (0..self.width).map(move |u| {
                self.pixel_ray(u as f64, v as f64)
                    .expect("pixel centers are in bounds")
            })
        })
    }
}

pub fn pixel_ray(camera: &CameraModel, pixel: (f64, f64)) -> Result<Ray> {
    camera.pixel_ray(pixel.0, pixel.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// The ray enters the container through its opening.
    Inner,
    /// The ray hits the container somewhere else first.
    Outer,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    regions: Vec<Region>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, regions: Vec<Region>) -> Result<Self> {
        if regions.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: regions.len(),
            });
        }
        Ok(Self {
            width,
            height,
            regions,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn get(&self, u: usize, v: usize) -> Region {
        self.regions[v * self.width + u]
    }

    pub fn inner_count(&self) -> usize {
        self.regions.iter().filter(|&&r| r == Region::Inner).count()
    }

    pub fn inner_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == Region::Inner)
            .map(|(i, _)| i)
    }
}

/// Flags the triangles forming the container's opening: the faces lying in
/// the top plane of the mesh with an upward normal.
pub fn rim_cap_triangles(mesh: &TriMesh) -> Vec<bool> {
    let (_, zmax) = mesh.z_range();
    let tol = 1e-9 * (1.0 + zmax.abs());
    (0..mesh.triangles().len())
        .map(|i| {
            let on_top = mesh.triangle(i).iter().all(|p| (p.z - zmax).abs() <= tol);
            on_top && mesh.normal(i).z > 0.0
        })
        .collect()
}

/// Nearest hit on the opening and nearest hit on the walls (every non-cap
/// triangle), as ray parameters.
pub fn opening_and_wall_hits(mesh: &TriMesh, cap: &[bool], ray: &Ray) -> (Option<f64>, Option<f64>) {
    let open = first_hit_where(mesh, ray, |i| cap[i]).map(|(t, _)| t);
    let wall = first_hit_where(mesh, ray, |i| !cap[i]).map(|(t, _)| t);
    (open, wall)
}

fn classify_ray(mesh: &TriMesh, cap: &[bool], ray: &Ray) -> Region {
    match opening_and_wall_hits(mesh, cap, ray) {
        (Some(o), w) if w.is_none_or(|w| o < w) => Region::Inner,
        (None, None) => Region::Neither,
        _ => Region::Outer,
    }
}

/// Labels every pixel inner, outer or neither. A pixel is inner when its ray
/// passes through the container's opening before touching any wall.
pub fn classify_pixels(camera: &CameraModel, mesh: &TriMesh) -> RegionMask {
    let cap = rim_cap_triangles(mesh);
    let regions = camera.rays().map(|r| classify_ray(mesh, &cap, &r)).collect();
    RegionMask {
        width: camera.width,
        height: camera.height,
        regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    fn intrinsics() -> Intrinsics {
        Intrinsics {
            width: 64,
            height: 48,
            fx: 80.0,
            fy: 80.0,
            cx: 31.5,
            cy: 23.5,
        }
    }

    #[test]
    fn principal_point_ray_is_optical_axis() {
        let cam = CameraModel::new(intrinsics(), Isometry3::identity()).unwrap();
        let r = cam.pixel_ray(31.5, 23.5).unwrap();
        assert_eq!(r.direction.into_inner(), Vector3::z());
        assert_eq!(r.origin, Point3::origin());
    }

    #[test]
    fn one_focal_length_off_axis_is_45_degrees() {
        let cam = CameraModel::new(intrinsics(), Isometry3::identity()).unwrap();
        let r = cam.pixel_ray(31.5 + 80.0 - 64.0, 23.5).unwrap();
        let d = r.direction;
        assert!((d.x / d.z - 16.0 / 80.0).abs() < 1e-15);

        let wide = Intrinsics {
            width: 200,
            ..intrinsics()
        };
        let cam = CameraModel::new(wide, Isometry3::identity()).unwrap();
        let d = cam.pixel_ray(31.5 + 80.0, 23.5).unwrap().direction;
        assert!((d.x / d.z - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ray_directions_are_unit() {
        let cam = CameraModel::look_at(
            intrinsics(),
            Point3::new(0.1, -0.2, 0.3),
            Point3::origin(),
            Vector3::z(),
        )
        .unwrap();
        for r in cam.rays() {
            assert!((r.direction.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_bounds_pixel() {
        let cam = CameraModel::new(intrinsics(), Isometry3::identity()).unwrap();
        assert!(matches!(
            cam.pixel_ray(64.0, 0.0),
            Err(Error::PixelOutOfBounds(..))
        ));
        assert!(cam.pixel_ray(-0.5, 3.0).is_err());
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        let bad = Intrinsics {
            fx: 0.0,
            ..intrinsics()
        };
        assert!(CameraModel::new(bad, Isometry3::identity()).is_err());
        let bad = Intrinsics {
            cx: 64.0,
            ..intrinsics()
        };
        assert!(CameraModel::new(bad, Isometry3::identity()).is_err());
    }

    #[test]
    fn look_at_points_forward() {
        let eye = Point3::new(0.0, -0.3, 0.4);
        let cam = CameraModel::look_at(intrinsics(), eye, Point3::origin(), Vector3::z()).unwrap();
        let axis = cam.pixel_ray(31.5, 23.5).unwrap().direction;
        let expected = (Point3::origin() - eye).normalize();
        assert!((axis.into_inner() - expected).norm() < 1e-12);
        // image "down" points toward world -z
        let below = cam.pixel_ray(31.5, 47.0).unwrap().direction;
        assert!(below.z < axis.z);
    }

    #[test]
    fn top_down_view_of_open_cylinder() {
        let cyl = shapes::cylinder(0.04, 0.12, 64);
        let cam = CameraModel::look_at(
            intrinsics(),
            Point3::new(0.0, 0.0, 0.5),
            Point3::origin(),
            Vector3::y(),
        )
        .unwrap();
        let mask = classify_pixels(&cam, &cyl);
        assert_eq!(mask.get(32, 24), Region::Inner);
        assert_eq!(mask.get(0, 0), Region::Neither);
        assert!(mask.inner_count() > 100);
    }

    #[test]
    fn side_view_sees_only_outer() {
        let cyl = shapes::cylinder(0.04, 0.12, 64);
        let cam = CameraModel::look_at(
            intrinsics(),
            Point3::new(0.5, 0.0, 0.06),
            Point3::new(0.0, 0.0, 0.06),
            Vector3::z(),
        )
        .unwrap();
        let mask = classify_pixels(&cam, &cyl);
        assert_eq!(mask.inner_count(), 0);
        assert_eq!(mask.get(32, 24), Region::Outer);
    }
}
