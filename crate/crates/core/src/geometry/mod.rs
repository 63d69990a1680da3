//! Triangle meshes, rigid motions, STL exchange and exact surface-distance queries.
//!
//! Everything is in millimeters. Meshes are immutable once built; operations
//! that move or scale a mesh return a new one with the same topology.

mod index;
mod mesh;
pub mod shapes;
mod stl;
mod transform;

pub use index::{
    build_spatial_index, closest_point_on_surface, closest_point_on_triangle, SurfaceHit,
    SurfaceIndex,
};
pub use mesh::{bounding_box, scale_mesh, transform_mesh, Aabb, TriMesh, MIN_TRIANGLE_AREA};
pub use stl::{
    load_mesh, mesh_from_facets, orient_consistently, parse_stl, save_mesh, save_mesh_binary,
    weld, write_ascii, WELD_TOLERANCE,
};
pub use transform::{PoseFile, RigidTransform};
