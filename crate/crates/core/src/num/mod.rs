//! Minimal tensor arithmetic, seeded randomness, and reverse-mode
//! gradient support for the trainable parts of the pipeline.

mod param;
mod rng;
mod tape;
mod tensor;

pub use param::{AdamState, ParamBlock, ParamNodes};
pub use rng::RngStream;
pub use tape::{
    nearest_center, nearest_center_index, soft_quant_deriv, soft_quant_value, softmax_into,
    Gradients, NodeId, Tape,
};
pub use tensor::{NumError, Scalar, Tensor};
