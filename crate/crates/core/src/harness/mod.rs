//! Experiment plumbing: channel simulation, configuration, end-to-end
//! encode/decode, training orchestration, rate-quality sweeps, and
//! Bjontegaard deltas.

mod bd;
mod channel;
mod config;
mod pipeline;
mod sweep;

pub use bd::{bd_metric, BdMode, CurvePoint};
pub use channel::{awgn_transmit, q_function, transmit, ChannelSpec};
pub use config::{ExperimentConfig, MODES};
pub use pipeline::{
    build_dataset, decode_stream, encode_sample, load_artifacts, save_artifacts,
    train_agent_episodes, Artifacts, DecodedStream,
};
pub use sweep::{
    channel_rng, evaluate_variant, fit_oracle, mode_checkpoint_path, perceptual_extractor,
    run_rd_sweep, PolicyVariant, SweepRow, SweepTable, VariantEval, EVAL_STREAM_BASE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("bad curve: {0}")]
    Curve(String),
    #[error("missing checkpoint for mode n={mode} at {path}")]
    MissingCheckpoint { mode: usize, path: String },
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
    #[error("numeric failure: {0}")]
    Num(#[from] crate::NumError),
    #[error("codec failure: {0}")]
    Codec(#[from] crate::codec::CodecError),
    #[error("decoder failure: {0}")]
    Decoder(#[from] crate::decoder::DecoderError),
    #[error("policy failure: {0}")]
    Policy(#[from] crate::policy::PolicyError),
    #[error("scene failure: {0}")]
    Scene(#[from] crate::scene::SceneError),
}
