//! Marker-free 3D-to-2D registration at desk scale.
//!
//! The pipeline: render a triangle mesh under known camera poses with a
//! deterministic software rasterizer, train a small convolutional regressor
//! to recover those poses from single grayscale images using the continuous
//! 6D rotation representation, and evaluate with ADD / angular / translation
//! metrics plus an inference-latency benchmark.
//!
//! Modules follow the pipeline stages:
//!
//! 1. [`geometry`] — SO(3)/SE(3) numerics, 6D representation, pose metrics,
//!    pinhole projection.
//! 2. [`mesh`] — triangle meshes: PLY/OBJ loading and procedural generators.
//! 3. [`render`] — z-buffered software rasterizer, overlays, PNG/PFDM I/O.
//! 4. [`dataset`] — synthetic pose sampling, frame generation, augmentation.
//! 5. [`model`] — the convolutional pose regressor and its checkpoints.
//! 6. [`training`] — weighted pose loss, Adam loop, gradient verification.
//! 7. [`evaluation`] — ADD / E_rot / E_t reports, leave-one-out, throughput.
//! 8. [`config`] — run configuration files and seed derivation for the CLI.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod mesh;
pub mod model;
pub mod render;
pub mod training;

pub use geometry::{Intrinsics, Pose, Rot6, RotationMatrix, Transform};
pub use mesh::TriMesh;
pub use render::{DepthMap, Image};
