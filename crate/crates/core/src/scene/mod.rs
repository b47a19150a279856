//! Synthetic scene generation, semantic masks and concepts, the feature
//! encoder, the feature classification head, and the task oracle.

mod encoder;
mod generate;
mod mask;
mod oracle;

pub use encoder::{
    encode_features, encode_features_graph, feature_class_loss, feature_class_loss_graph,
    EncoderModel, LEAKY_SLOPE, NORM_EPS,
};
pub use generate::{class_palette, generate_scene, SceneConfig, SceneSample};
pub use mask::{decompose_features, downscale_labels, extract_mask, SemanticConcept, SemanticMask};
pub use oracle::{TaskKind, TaskOracle, TaskPrediction};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("at most 16 classes supported, got {0}")]
    TooManyClasses(usize),
    #[error("dimensions {h}x{w} must be divisible by 8")]
    BadDimensions { h: usize, w: usize },
    #[error("class id {0} out of range 1..={1}")]
    BadClassId(u8, usize),
    #[error("{0}")]
    Invalid(String),
}
