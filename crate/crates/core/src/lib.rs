//! Geodesic multiresolution hash encodings for directional and
//! spatio-directional neural fields.
//!
//! * [`sphere_encoding`]: the hash-sphere, a learnable encoding of directions on
//!   a recursively subdivided icosahedron.
//! * [`joint_encoding`]: the hash-grid-sphere, coupling a spatial voxel grid
//!   and the geodesic grid through a joint hash of (corner, vertex) pairs.
//! * [`baseline_grids`]: ordinary multiresolution hash grids over polar (2D)
//!   and Cartesian (3D) direction coordinates, for comparison.
//! * [`nn`]: a small MLP head, Adam, relative-L2 loss.
//! * [`tasks`]: environment-map compression and synthetic 5D fitting.
//! * [`io`]: HDR loading, checkpoints and result tables.
//!
//! Trainable state is generic over [`Real`]; the `*F32` aliases are the
//! single-precision types used for training.

pub mod baseline_grids;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod geodesic;
pub mod hashing;
pub mod io;
pub mod nn;
pub mod joint_encoding;
pub mod model;
pub mod scalar;
pub mod sphere_encoding;
pub mod tasks;

pub use encoding::{Encoding, GradientBuffer, ParamTable, Tap};
pub use error::{Error, Result};
pub use geodesic::{Barycentric, GeodesicTriangle, UnitVector};
pub use hashing::HashConfig;
pub use scalar::Real;

pub type HashSphereF32 = sphere_encoding::HashSphere<f32>;
pub type HashSphereF64 = sphere_encoding::HashSphere<f64>;
pub type HashGridSphereF32 = joint_encoding::HashGridSphere<f32>;
pub type HashGridSphereF64 = joint_encoding::HashGridSphere<f64>;
pub type HashGridF32 = baseline_grids::HashGrid<f32>;
pub type HashGridF64 = baseline_grids::HashGrid<f64>;
pub type MlpF32 = nn::Mlp<f32>;
pub type MlpF64 = nn::Mlp<f64>;
pub type ModelF32 = model::Model<f32>;
