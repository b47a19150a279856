use crate::num::{NodeId, NumError, ParamNodes, RngStream};
use crate::scene::LEAKY_SLOPE;
use crate::{ParamBlock, Tape, Tensor};

use super::episode::AllocState;
use super::PolicyError;

const HIDDEN1: usize = 64;
const HIDDEN2: usize = 32;

/// Three-layer level-selection policy. The input is the pooled concept
/// feature vector (mean and max per channel), the mask coverage and
/// presence, and a one-hot step index; the output is a distribution over
/// the Q quantization levels. The final layer starts at zero so the
/// initial policy is exactly uniform.
#[derive(Debug, Clone)]
pub struct PolicySpec {
    pub params: ParamBlock<f64>,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl PolicySpec {
    pub fn new(n: usize, m: usize, q: usize, alpha: f64, rng: &mut RngStream) -> Self {
        let d = Self::input_dim(n, m);
        let mut params = ParamBlock::new();
        params.insert_randn("pol.w1", vec![d, HIDDEN1], (d as f64).sqrt().recip(), rng);
        params.insert_zeros("pol.b1", vec![HIDDEN1]);
        params.insert_randn("pol.w2", vec![HIDDEN1, HIDDEN2], (HIDDEN1 as f64).sqrt().recip(), rng);
        params.insert_zeros("pol.b2", vec![HIDDEN2]);
        params.insert_zeros("pol.w3", vec![HIDDEN2, q]);
        params.insert_zeros("pol.b3", vec![q]);
        Self { params, n, m, q, alpha, dropout: 0.0 }
    }

    pub const fn input_dim(n: usize, m: usize) -> usize {
        2 * n + 2 + m
    }
}

/// Pooled state vector: per-channel mean and max of the concept
/// features, mask mean and max, one-hot step index.
pub fn state_input(state: &AllocState, m: usize) -> Tensor {
    let (n, cells) = state.features.rows_cols();
    let mut data = Vec::with_capacity(PolicySpec::input_dim(n, m));
    for ch in 0..n {
        let row = &state.features.data()[ch * cells..(ch + 1) * cells];
        data.push(row.iter().sum::<f64>() / cells as f64);
    }
    for ch in 0..n {
        let row = &state.features.data()[ch * cells..(ch + 1) * cells];
        data.push(row.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let cover =
        state.full_mask.iter().map(|&v| v as f64).sum::<f64>() / state.full_mask.len() as f64;
    data.push(cover);
    data.push(if cover > 0.0 { 1.0 } else { 0.0 });
    for step in 1..=m {
        data.push(if step == state.step { 1.0 } else { 0.0 });
    }
    Tensor::from_vec(data)
}

/// Builds the forward graph; returns the [1, Q] probability node.
pub fn policy_probs_graph(
    tape: &mut Tape,
    nodes: &ParamNodes,
    input: NodeId,
) -> Result<NodeId, NumError> {
    let d = tape.value(input).len();
    let row = tape.reshape(input, vec![1, d])?;
    let l1 = tape.matmul(row, nodes.id("pol.w1"))?;
    let b1 = tape.reshape(nodes.id("pol.b1"), vec![1, HIDDEN1])?;
    let a1 = tape.add(l1, b1)?;
    let h1 = tape.leaky_relu(a1, LEAKY_SLOPE)?;
    let l2 = tape.matmul(h1, nodes.id("pol.w2"))?;
    let b2 = tape.reshape(nodes.id("pol.b2"), vec![1, HIDDEN2])?;
    let a2 = tape.add(l2, b2)?;
    let h2 = tape.leaky_relu(a2, LEAKY_SLOPE)?;
    let l3 = tape.matmul(h2, nodes.id("pol.w3"))?;
    let b3 = tape.value(nodes.id("pol.b3")).len();
    let b3 = {
        let q = b3;
        tape.reshape(nodes.id("pol.b3"), vec![1, q])?
    };
    let logits = tape.add(l3, b3)?;
    tape.softmax_rows(logits)
}

/// Probability vector over levels for one state.
pub fn policy_forward(state: &AllocState, policy: &PolicySpec) -> Result<Vec<f64>, PolicyError> {
    let mut tape = Tape::new();
    let nodes = policy.params.feed(&mut tape);
    let input = tape.input(state_input(state, policy.m));
    let probs = policy_probs_graph(&mut tape, &nodes, input)?;
    Ok(tape.value(probs).data().to_vec())
}

/// Inverse-CDF sample; returns the 1-based level and its log-probability.
pub fn sample_action(probs: &[f64], rng: &mut RngStream) -> (u8, f64) {
    let u = rng.uniform(0.0, 1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return ((i + 1) as u8, p.ln());
        }
    }
    let last = probs.len() - 1;
    ((last + 1) as u8, probs[last].ln())
}
