//! Triangle-mesh geometry: the deformable organ mesh, OBJ / X3D input,
//! quadric decimation, a bounding volume hierarchy, and the closest-point and
//! inside/outside queries the haptic loop runs every step.

mod bvh;
mod decimate;
mod io;
mod mesh;
pub mod primitives;
mod query;

pub use bvh::{Aabb, Bvh, BvhNode};
pub use decimate::{decimate, decimate_with, DecimateOptions, Decimation};
pub use io::{load_mesh, save_obj, MeshFormat};
pub use mesh::{DeformableMesh, MeshId, NormalReport};
pub use query::{
    closest_point, closest_point_on_triangle, is_inside, sample_surface, sampled_hausdorff,
    SurfaceFeature,
    SurfacePoint,
};

use thiserror::Error;

/// Millimetre-space 3-vector used throughout the engine.
pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{element}: {message}")]
    X3d { element: String, message: String },
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("triangle {triangle} is degenerate (zero area)")]
    DegenerateTriangle { triangle: usize },
    #[error("mesh is not watertight: edge ({a}, {b}) is shared by {count} triangles")]
    NotWatertight { a: u32, b: u32, count: usize },
    #[error("decimation target {target} is below the 4-triangle minimum")]
    InvalidTarget { target: usize },
    #[error("mesh has no triangles")]
    Empty,
}
