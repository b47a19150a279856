use crate::codec::{encode_label_map, label_map_bits, HuffmanTable, QuantizerSpec};
use crate::criterion::{
    criterion_report, miou_loss, perceptual_loss, CriterionReport, CriterionWeights,
    PerceptualExtractor,
};
use crate::decoder::{decode_image, GeneratorModel};
use crate::layout::Layout;
use crate::num::RngStream;
use crate::scene::{
    decompose_features, encode_features, extract_mask, EncoderModel, SceneSample,
    SemanticConcept, TaskOracle,
};
use crate::Tensor;

use super::net::{policy_forward, sample_action, state_input, PolicySpec};
use super::PolicyError;

/// Hard ceiling on the number of level assignments the exact objective
/// oracle will enumerate.
pub const ENUMERATION_LIMIT: usize = 4096;

/// Softness handed to the quantizer specs; irrelevant for the hard
/// assignment used during episodes but required by the constructor.
const EPISODE_SIGMA: f64 = 10.0;

/// What the policy sees before choosing a level for one concept.
#[derive(Debug, Clone)]
pub struct AllocState {
    /// Raw (un-quantized) concept features, [n, cells], zero off-mask.
    pub features: Tensor,
    /// Full-resolution indicator of the concept's region.
    pub full_mask: Vec<u8>,
    /// 1-based concept index within the episode.
    pub step: usize,
}

/// One decision of a rollout.
#[derive(Debug, Clone)]
pub struct TrajStep {
    /// Pooled state vector fed to the policy.
    pub state: Tensor,
    /// Chosen level, 1-based.
    pub action: u8,
    /// ln pi(action | state) at sampling time.
    pub logprob: f64,
    /// Stepwise objective improvement.
    pub reward: f64,
}

/// A complete episode over one image.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    /// Final per-concept levels.
    pub levels: Vec<u8>,
    /// Criterion breakdown after each decision.
    pub reports: Vec<CriterionReport>,
    /// Composite objective of the final reconstruction.
    pub final_loss: f64,
    /// Objective of the all-coarsest starting point.
    pub initial_loss: f64,
    pub gamma: f64,
    /// Policy parameter version the log-probs were recorded at.
    pub param_version: u64,
}

impl Trajectory {
    /// Discounted return of the whole episode: the step-1 reward is
    /// already discounted once.
    pub fn ret(&self) -> f64 {
        discounted_return(&self.rewards(), self.gamma)
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// G = sum_m gamma^m r_m with m starting at 1.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| gamma.powi(i as i32 + 1) * r)
        .sum()
}

#[derive(Debug, Clone)]
struct CachedLevel {
    payload_bits: usize,
    /// Dequantized concept features, re-gated by the downscaled mask.
    features: Tensor,
}

/// Everything about one image that episodes reuse: raw concepts from the
/// frozen analysis model, the oracle's reading of the original, the label
/// rate, and per-(concept, level) coded payloads with their dequantized
/// features.
pub struct EpisodeContext<'a> {
    pub generator: &'a GeneratorModel,
    pub oracle: &'a TaskOracle,
    pub extractor: &'a PerceptualExtractor,
    pub layout: &'a Layout,
    pub weights: CriterionWeights,
    pub q: u8,
    pub image: Tensor,
    pub concepts: Vec<SemanticConcept>,
    gt_task_labels: Vec<u8>,
    label_bits: usize,
    cache: Vec<Vec<CachedLevel>>,
}

impl<'a> EpisodeContext<'a> {
    pub fn new(
        sample: &SceneSample,
        encoder: &EncoderModel,
        generator: &'a GeneratorModel,
        oracle: &'a TaskOracle,
        extractor: &'a PerceptualExtractor,
        layout: &'a Layout,
        weights: CriterionWeights,
        q: u8,
    ) -> Result<Self, PolicyError> {
        let m = sample.num_classes;
        let feats = encode_features(&sample.image, encoder, layout)?;
        let mut concepts = Vec::with_capacity(m);
        let mut cache = Vec::with_capacity(m);
        for class in 1..=m as u8 {
            let mask = extract_mask(&sample.labels, sample.height, sample.width, m, class)
                .map_err(|e| PolicyError::Invalid(e.to_string()))?;
            let concept = decompose_features(&feats, &mask);
            let mut by_level = Vec::with_capacity(q as usize);
            for level in 1..=q {
                let spec = QuantizerSpec::new(level, EPISODE_SIGMA)
                    .map_err(|e| PolicyError::Codec(e.to_string()))?;
                let (quantized, symbols) = spec.quantize_hard(&concept.features);
                let table =
                    HuffmanTable::build(&symbols).map_err(|e| PolicyError::Codec(e.to_string()))?;
                let payload =
                    table.encode(&symbols).map_err(|e| PolicyError::Codec(e.to_string()))?;
                by_level.push(CachedLevel {
                    payload_bits: payload.len(),
                    features: decompose_features(&quantized, &mask).features,
                });
            }
            concepts.push(concept);
            cache.push(by_level);
        }
        Ok(Self {
            generator,
            oracle,
            extractor,
            layout,
            weights,
            q,
            image: sample.image.clone(),
            gt_task_labels: oracle.predict_labels(&sample.image),
            label_bits: label_map_bits(&encode_label_map(&sample.labels)),
            concepts,
            cache,
        })
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    /// Transmitted bits per pixel for a complete level assignment.
    pub fn psi(&self, levels: &[u8]) -> f64 {
        let payload: usize = levels
            .iter()
            .enumerate()
            .map(|(c, &l)| self.cache[c][l as usize - 1].payload_bits)
            .sum();
        (self.label_bits + payload) as f64 / self.layout.pixels() as f64
    }

    /// Full reconstruction under a complete level assignment.
    pub fn decode_at(&self, levels: &[u8]) -> Result<Tensor, PolicyError> {
        let coded: Vec<SemanticConcept> = self
            .concepts
            .iter()
            .zip(levels)
            .map(|(c, &l)| SemanticConcept {
                class_id: c.class_id,
                features: self.cache[c.class_id as usize - 1][l as usize - 1].features.clone(),
                mask: c.mask.clone(),
            })
            .collect();
        decode_image(self.generator, self.layout, &coded)
            .map_err(|e| PolicyError::Decoder(e.to_string()))
    }

    /// Keeps `prev` except inside the concept's full-resolution region,
    /// which is taken from `fresh`.
    fn composite(&self, prev: &Tensor, fresh: &Tensor, full_mask: &[u8]) -> Tensor {
        let hw = self.layout.pixels();
        let mut data = prev.data().to_vec();
        for (p, &on) in full_mask.iter().enumerate() {
            if on != 0 {
                for ch in 0..3 {
                    data[ch * hw + p] = fresh.data()[ch * hw + p];
                }
            }
        }
        Tensor::new(prev.shape().to_vec(), data).expect("composite")
    }

    /// Criterion breakdown of a reconstruction under a level assignment,
    /// with the rate measured relative to `psi0`.
    pub fn assess(
        &self,
        levels: &[u8],
        x_hat: &Tensor,
        psi0: f64,
    ) -> Result<CriterionReport, PolicyError> {
        let rate = self.psi(levels) - psi0;
        let l_s = miou_loss(
            &self.gt_task_labels,
            &self.oracle.predict_labels(x_hat),
            self.concepts.len(),
        );
        let l_p = perceptual_loss(&self.image, x_hat, self.extractor)?;
        Ok(criterion_report(rate, l_s, l_p, &self.weights))
    }

    fn state(&self, step: usize) -> AllocState {
        let c = &self.concepts[step - 1];
        AllocState {
            features: c.features.clone(),
            full_mask: c.mask.full.clone(),
            step,
        }
    }
}

/// Deterministic evaluation-time level selection: the modal action of
/// the policy at every step.
pub fn greedy_levels(ctx: &EpisodeContext, policy: &PolicySpec) -> Result<Vec<u8>, PolicyError> {
    let mut levels = Vec::with_capacity(ctx.num_concepts());
    for step in 1..=ctx.num_concepts() {
        let probs = policy_forward(&ctx.state(step), policy)?;
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i + 1)
            .unwrap();
        levels.push(best as u8);
    }
    Ok(levels)
}

/// Runs one episode: visit the concepts in class order, sample a level
/// for each, re-code and re-decode that concept's region, and reward the
/// drop in the composite objective.
pub fn rollout(
    ctx: &EpisodeContext,
    policy: &PolicySpec,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<Trajectory, PolicyError> {
    let m = ctx.num_concepts();
    let mut levels = vec![1u8; m];
    let psi0 = ctx.psi(&levels);
    let mut x_hat = ctx.decode_at(&levels)?;
    let initial = ctx.assess(&levels, &x_hat, psi0)?;
    let initial_loss = initial.composite;
    let mut prev_loss = initial_loss;

    let mut steps = Vec::with_capacity(m);
    let mut reports = Vec::with_capacity(m);
    for step in 1..=m {
        let state = ctx.state(step);
        let probs = policy_forward(&state, policy)?;
        let (action, logprob) = sample_action(&probs, rng);
        levels[step - 1] = action;
        let fresh = ctx.decode_at(&levels)?;
        x_hat = ctx.composite(&x_hat, &fresh, &ctx.concepts[step - 1].mask.full);
        let report = ctx.assess(&levels, &x_hat, psi0)?;
        let reward = prev_loss - report.composite;
        prev_loss = report.composite;
        steps.push(TrajStep {
            state: state_input(&state, m),
            action,
            logprob,
            reward,
        });
        reports.push(report);
    }
    Ok(Trajectory {
        steps,
        levels,
        reports,
        final_loss: prev_loss,
        initial_loss,
        gamma,
        param_version: policy.params.version(),
    })
}

struct Enumerator<'c, 'a> {
    ctx: &'c EpisodeContext<'a>,
    states: Vec<Tensor>,
    probs: Vec<Vec<f64>>,
    gamma: f64,
    psi0: f64,
    initial_loss: f64,
    param_version: u64,
    out: Vec<(f64, Trajectory)>,
}

impl Enumerator<'_, '_> {
    fn walk(
        &mut self,
        levels: &mut Vec<u8>,
        depth: usize,
        x_hat: &Tensor,
        prev_loss: f64,
        prob: f64,
        steps: &mut Vec<TrajStep>,
        reports: &mut Vec<CriterionReport>,
    ) -> Result<(), PolicyError> {
        if depth == levels.len() {
            self.out.push((
                prob,
                Trajectory {
                    steps: steps.clone(),
                    levels: levels.clone(),
                    reports: reports.clone(),
                    final_loss: prev_loss,
                    initial_loss: self.initial_loss,
                    gamma: self.gamma,
                    param_version: self.param_version,
                },
            ));
            return Ok(());
        }
        for level in 1..=self.ctx.q {
            levels[depth] = level;
            let fresh = self.ctx.decode_at(levels)?;
            let next = self.ctx.composite(x_hat, &fresh, &self.ctx.concepts[depth].mask.full);
            let report = self.ctx.assess(levels, &next, self.psi0)?;
            let p = self.probs[depth][level as usize - 1];
            steps.push(TrajStep {
                state: self.states[depth].clone(),
                action: level,
                logprob: p.ln(),
                reward: prev_loss - report.composite,
            });
            reports.push(report);
            self.walk(levels, depth + 1, &next, report.composite, prob * p, steps, reports)?;
            steps.pop();
            reports.pop();
        }
        levels[depth] = 1;
        Ok(())
    }
}

/// Every possible episode over the context, with its probability under
/// the current policy. The per-step states do not depend on earlier
/// actions, so the action distribution factorizes and the list covers
/// q^M sequences; instances past [`ENUMERATION_LIMIT`] are rejected.
pub fn enumerate_trajectories(
    ctx: &EpisodeContext,
    policy: &PolicySpec,
    gamma: f64,
) -> Result<Vec<(f64, Trajectory)>, PolicyError> {
    let m = ctx.num_concepts();
    let total = (ctx.q as usize).checked_pow(m as u32).unwrap_or(usize::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(PolicyError::TooLarge(total));
    }
    let mut states = Vec::with_capacity(m);
    let mut probs = Vec::with_capacity(m);
    for step in 1..=m {
        let state = ctx.state(step);
        probs.push(policy_forward(&state, policy)?);
        states.push(state_input(&state, m));
    }
    let mut levels = vec![1u8; m];
    let psi0 = ctx.psi(&levels);
    let x0 = ctx.decode_at(&levels)?;
    let initial_loss = ctx.assess(&levels, &x0, psi0)?.composite;
    let mut e = Enumerator {
        ctx,
        states,
        probs,
        gamma,
        psi0,
        initial_loss,
        param_version: policy.params.version(),
        out: Vec::with_capacity(total),
    };
    e.walk(&mut levels, 0, &x0, initial_loss, 1.0, &mut Vec::new(), &mut Vec::new())?;
    Ok(e.out)
}

/// Exact value of the episode objective J = E[G] under the current
/// policy, by enumerating every level assignment.
pub fn exact_j_oracle(
    ctx: &EpisodeContext,
    policy: &PolicySpec,
    gamma: f64,
) -> Result<f64, PolicyError> {
    Ok(enumerate_trajectories(ctx, policy, gamma)?
        .iter()
        .map(|(p, t)| p * t.ret())
        .sum())
}
