use std::rc::Rc;

use crate::num::RngStream;
use crate::Tape;

use super::episode::{rollout, EpisodeContext, Trajectory};
use super::net::{policy_probs_graph, PolicySpec};
use super::PolicyError;

/// Knobs of the allocation-agent training loop. The step size lives on
/// the policy itself so a fine-tuning pass can shrink it independently.
#[derive(Debug, Clone, Copy)]
pub struct AgentConfig {
    pub epochs: usize,
    pub gamma: f64,
    /// Subtract a moving-average return baseline from the score scale.
    pub baseline: bool,
    pub baseline_decay: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { epochs: 5, gamma: 0.99, baseline: false, baseline_decay: 0.9 }
    }
}

/// Per-epoch training telemetry.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_final_loss: f64,
}

/// Accumulates `advantage * grad log pi(a|s)` over the episode into the
/// policy's gradient slots. Rejects trajectories whose log-probs were
/// recorded under different parameters.
pub fn reinforce_gradient(
    policy: &mut PolicySpec,
    traj: &Trajectory,
    advantage: f64,
) -> Result<(), PolicyError> {
    let now = policy.params.version();
    if traj.param_version != now {
        return Err(PolicyError::Stale { got: traj.param_version, now });
    }
    for step in &traj.steps {
        let mut tape = Tape::new();
        let nodes = policy.params.feed(&mut tape);
        let input = tape.input(step.state.clone());
        let probs = policy_probs_graph(&mut tape, &nodes, input)?;
        let picked = tape.gather(probs, Rc::new(vec![step.action as usize - 1]), vec![1])?;
        let logp = tape.log(picked)?;
        let scaled = tape.scale(logp, advantage)?;
        let grads = tape.backward(scaled)?;
        policy.params.accumulate_grads(&nodes, &grads)?;
    }
    Ok(())
}

/// One score-function ascent step from a single episode.
pub fn update_policy(
    policy: &mut PolicySpec,
    traj: &Trajectory,
    advantage: f64,
) -> Result<(), PolicyError> {
    policy.params.zero_grads();
    reinforce_gradient(policy, traj, advantage)?;
    let alpha = policy.alpha;
    policy.params.apply_step(alpha)?;
    Ok(())
}

/// Episodic training: every epoch rolls one episode per context and
/// applies an update after each.
pub fn train_agent(
    contexts: &[EpisodeContext],
    policy: &mut PolicySpec,
    config: &AgentConfig,
    rng: &mut RngStream,
) -> Result<Vec<EpochLog>, PolicyError> {
    if contexts.is_empty() {
        return Err(PolicyError::Invalid("no episode contexts supplied".into()));
    }
    let mut logs = Vec::with_capacity(config.epochs);
    let mut baseline = 0.0;
    let mut baseline_ready = false;
    for epoch in 1..=config.epochs {
        let mut sum_g = 0.0;
        let mut sum_loss = 0.0;
        for ctx in contexts {
            let traj = rollout(ctx, policy, config.gamma, rng)?;
            let g = traj.ret();
            let advantage = if config.baseline && baseline_ready { g - baseline } else { g };
            if config.baseline {
                baseline = if baseline_ready {
                    config.baseline_decay * baseline + (1.0 - config.baseline_decay) * g
                } else {
                    g
                };
                baseline_ready = true;
            }
            update_policy(policy, &traj, advantage)?;
            sum_g += g;
            sum_loss += traj.final_loss;
        }
        logs.push(EpochLog {
            epoch,
            mean_return: sum_g / contexts.len() as f64,
            mean_final_loss: sum_loss / contexts.len() as f64,
        });
    }
    Ok(logs)
}
