//! Infilling-sphere shape representation: solid voxelization, exact signed
//! distance fields, greedy coarse-to-fine sphere sets, and a lightweight
//! permutation-invariant classifier over the sphere sets.

pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod mesh;
pub mod net;
pub mod pipeline;
pub mod scalar;
pub mod sdf;
pub mod shapes;
pub mod spheres;
pub mod synthetic;
pub mod voxel;

pub use error::{Error, Result};
pub use scalar::Real;

/// Single-precision aliases; training and caches default to these.
pub type MeshF32 = mesh::TriangleMesh<f32>;
pub type SdfGridF32 = sdf::SdfGrid<f32>;
pub type SphereSetF32 = spheres::SphereSet<f32>;
pub type SphereSampleF32 = dataset::SphereSample<f32>;
pub type SphereNetF32 = net::SphereNet<f32>;

/// Double-precision aliases, used for gradient checks and reference runs.
pub type MeshF64 = mesh::TriangleMesh<f64>;
pub type SdfGridF64 = sdf::SdfGrid<f64>;
pub type SphereSetF64 = spheres::SphereSet<f64>;
pub type SphereSampleF64 = dataset::SphereSample<f64>;
pub type SphereNetF64 = net::SphereNet<f64>;
