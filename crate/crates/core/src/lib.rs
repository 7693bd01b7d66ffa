//! Single-sketch statue reconstruction.
//!
//! The crate covers the whole pipeline: meshes are normalized and rendered
//! on an orthographic turntable ([`geometry`]), renders are reduced to line
//! drawings ([`sketch`]), a multi-head encoder-decoder with a
//! gradient-reversal statue classifier learns to predict RGB, depth, normals
//! and a foreground mask from the sketch ([`net`], [`train`]), and the
//! predictions are lifted back into a point cloud ([`recon`]).
//!
//! Data-parallel loops (batch gradients, view rendering, nearest-neighbour
//! queries) go through [`exec`], which uses rayon when the `parallel` feature
//! is enabled and plain iteration otherwise.

pub mod datagen;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod net;
pub mod raster;
pub mod recon;
pub mod sketch;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use raster::Raster;

/// Environment variable naming the directory used for decoded-sample caches.
pub const CACHE_ENV: &str = "SKETCH2STATUE_CACHE";
