//! Synthetic mushroom-bed datasets: procedural meshes, Poisson-disk scene
//! layouts, a depth and instance-id rasterizer, COCO annotation export with
//! cropping and tiling, and the metrics used to judge the results.
//!
//! Geometry, rendering and the feature-space distances are generic over
//! [`Real`] (`f32` or `f64`); the aliases below fix the default `f64`
//! instantiations.

pub mod annotate;
pub mod eval;
pub mod fsutil;
pub mod geom;
pub mod mask;
pub mod num;
pub mod procgen;
pub mod render;
pub mod rng;
pub mod scene;

pub use num::Real;

pub type Vec3 = geom::Vec3<f64>;
pub type Mat3 = geom::Mat3<f64>;
pub type MushroomParams = procgen::MushroomParams<f64>;
pub type MushroomMesh = procgen::MushroomMesh<f64>;
pub type MushroomMeshF32 = procgen::MushroomMesh<f32>;
pub type FeatureSet = eval::FeatureSet<f64>;
pub type FeatureSetF32 = eval::FeatureSet<f32>;
