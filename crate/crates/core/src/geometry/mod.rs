//! Meshes, the orthographic turntable camera, the z-buffer rasterizer and
//! point clouds.

mod camera;
mod cloud;
pub mod io;
mod mesh;
mod render;
pub mod shapes;

pub use camera::{make_turntable_cameras, OrthoCamera, DEFAULT_HALF_EXTENT, DEFAULT_REFERENCE_DISTANCE};
pub use cloud::{backproject, chamfer_distance, chamfer_distance_with, fuse_views, PointCloud, PointGrid, ViewInput};
pub use mesh::TriangleMesh;
pub use render::{depth_to_normals, rasterize, render_views, RenderSample};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
