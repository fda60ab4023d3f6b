//! Single-image body mesh recovery by hierarchical Laplacian handle
//! deformation, shading-based detail refinement and UV texture completion.

pub mod anchors;
pub mod camera;
pub mod cluster;
pub mod config;
pub mod error;
pub mod grid;
pub mod handles;
pub mod harness;
pub mod laplacian;
pub mod mesh;
pub mod metrics;
pub mod obj;
pub mod par;
pub mod pipeline;
pub mod predict;
pub mod raster;
pub mod shading;
pub mod sparse;
pub mod spatial;
pub mod symmetry;
pub mod synth;
pub mod template;
pub mod texture;

pub use camera::WeakPerspectiveCamera;
pub use error::{Error, Result};
pub use grid::{BinaryMask, DepthMap, Grid};
pub use mesh::{subdivide_1to4, vertex_normals, TriMesh, Vec2, Vec3};
pub use obj::{load_mesh, save_mesh};
pub use raster::{depth_to_normals, rasterize, render_normal_map, NormalMap, Raster};
pub use symmetry::{mirror_correspondence, Axis, SymmetryMap};
pub use laplacian::{differential_coords, solve_deform, DeformProblem, HandleConstraint, HandleTarget};
