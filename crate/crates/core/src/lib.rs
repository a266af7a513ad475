//! Geometric and learning-based core for identifying overlapping bubbles in
//! images.
//!
//! The crate is organised around a few representations:
//!
//! * [`LabelMap`]: an instance-id raster, the common currency of every stage.
//! * [`StarPolygon`]: an object center plus `k` radial distances.
//! * [`synthgen::Scene`]: synthetic ground truth with full and visible shapes.
//!
//! Hidden parts of occluded bubbles are reconstructed either with the radial
//! distance correction regressor in [`rdc`] or with constrained ellipse
//! fitting in [`ellipse`]. [`eval`] holds the matching, AP and gas-fraction
//! accounting used to compare them.
//!
//! With the default `parallel` feature, batch and per-instance loops run on
//! rayon. Without it every loop runs sequentially; results are bit-identical
//! either way.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ellipse;
pub mod eval;
pub mod fuse;
pub mod geometry;
pub mod io;
pub mod par;
pub mod rdc;
pub mod synthgen;

pub use geometry::{LabelMap, Mask, PixelScale, PixelSet, ProbabilityMap, Raster, StarPolygon, Unit};

/// Angular resolution used throughout the bubble pipeline.
pub const DEFAULT_K: usize = 64;
