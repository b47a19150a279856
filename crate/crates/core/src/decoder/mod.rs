//! Generative semantic decoder: per-class local generation, a
//! mask-modulated global decoder, attention fusion, a two-scale
//! conditional discriminator, hinge losses, and the pretraining /
//! finetuning loops.

mod discriminator;
mod losses;
mod model;
mod train;

pub use discriminator::{discriminate, discriminate_graph, Discriminator};
pub use losses::{
    attention_fuse, hinge_discriminator_graph, hinge_generator_graph, hinge_losses,
    joint_generator_loss, GanWeights,
};
pub use model::{
    decode_graph, decode_image, global_generate, local_generate, DecodeNodes, GeneratorModel,
    TRUNK_WIDTH,
};
pub use train::{finetune_stage3, train_stage1, Stage1Config, Stage1Report};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecoderError {
    #[error("attention weights violate the sum-to-one invariant at pixel {0}")]
    BadAttention(usize),
    #[error("numeric failure: {0}")]
    Num(#[from] crate::NumError),
    #[error("non-finite loss at alternation {0}")]
    Diverged(usize),
    #[error("stage ordering violated: {0}")]
    StageOrder(String),
    #[error("{0}")]
    Invalid(String),
}
