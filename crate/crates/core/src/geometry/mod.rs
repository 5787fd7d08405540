//! Container meshes, plane clipping, and camera rays.

pub mod camera;
pub mod clip;
pub mod mesh;
pub mod obj;
pub mod ray;
pub mod shapes;

pub use camera::{classify_pixels, pixel_ray, CameraModel, Intrinsics, Region, RegionMask};
pub use clip::{fill_height, volume_below_plane, DEFAULT_FILL_TOL};
pub use mesh::{mesh_volume, TriMesh};
pub use obj::{load_obj, save_obj};
pub use ray::{ray_first_hit, Ray};

/// Cubic meters per milliliter.
pub const M3_PER_ML: f64 = 1e-6;
