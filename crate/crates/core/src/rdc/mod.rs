//! Radial distance correction: a dense regressor that extends the radial
//! distances of partially hidden bubbles to their true lengths.

mod adam;
mod mlp;
mod model;
mod samples;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use mlp::{Mlp, SHARD};
pub use model::{
    correct_polygon, merge_radii, predict, Correction, CorrectionPolicy, LayerRecord, Predictor, RdcModel,
    TrainMeta, MODEL_VERSION,
};
pub use samples::{extract_samples, segment_center, visible_rays, RdcSample, SampleSet};
pub use train::{stack, train, LossHistory, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdcError {
    #[error("instance {0} has no visible pixels")]
    DegenerateSegment(u32),
    #[error("training needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("expected {expected} radii, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}
