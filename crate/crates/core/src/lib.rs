//! Deterministic simulator and codec library for RL-driven adaptive
//! semantic image coding: semantic-concept extraction, a
//! rate-semantic-perceptual criterion, REINFORCE-based bit allocation,
//! soft/hard quantization, Huffman-coded semantic bitstreams, a
//! generative decoder with attention fusion, and an AWGN evaluation
//! harness.

pub mod codec;
pub mod criterion;
pub mod decoder;
pub mod harness;
pub mod io;
pub mod layout;
pub mod num;
pub mod policy;
pub mod scene;

pub use num::{NumError, ParamBlock, RngStream};

/// Concrete scalar for the pipeline; the numeric core itself is generic.
pub type Tensor = num::Tensor<f64>;
pub type Tape = num::Tape<f64>;
