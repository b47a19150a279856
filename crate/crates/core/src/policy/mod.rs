//! Bit-allocation MDP: the level-selection policy network, episode
//! rollout against the coding pipeline, REINFORCE updates, and an exact
//! enumeration oracle for tiny instances.

mod episode;
mod net;
mod train;

pub use episode::{
    discounted_return, enumerate_trajectories, exact_j_oracle, greedy_levels, rollout,
    AllocState, EpisodeContext, TrajStep, Trajectory, ENUMERATION_LIMIT,
};
pub use net::{policy_forward, sample_action, state_input, PolicySpec};
pub use train::{reinforce_gradient, train_agent, update_policy, AgentConfig, EpochLog};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("numeric failure: {0}")]
    Num(#[from] crate::NumError),
    #[error("codec failure: {0}")]
    Codec(String),
    #[error("decoder failure: {0}")]
    Decoder(String),
    #[error("trajectory log-probs are stale: recorded at parameter version {got}, policy is at {now}")]
    Stale { got: u64, now: u64 },
    #[error("state space {0} exceeds the enumeration limit 4096")]
    TooLarge(usize),
    #[error("{0}")]
    Invalid(String),
}
