//! Synthetic overlapping-bubble scenes with exact ground truth.

mod render;
mod scene;
mod shape;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use render::{render_scene, RenderConfig};
pub use scene::{
    compose_alpha_scene, compose_rdc_scene, compose_scene, generate_batch, BubbleRecord, Scene, SceneBubble,
    SceneConfig, SceneMode, SceneRecord, SceneSeed, ALPHA_CANVAS_PX,
};
pub use shape::{bubble_volume, sample_shape, BubbleShape, Harmonic, ShapeClass, MAX_WOBBLE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidRange(String),
    #[error("placement failed for scene {seed:?} after {attempts} attempts ({placed} bubbles placed)")]
    PlacementFailure {
        seed: SceneSeed,
        attempts: usize,
        placed: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
