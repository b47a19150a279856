use std::rc::Rc;

use crate::codec::centers_for_level;
use crate::criterion::{perceptual_loss_graph, PerceptualExtractor};
use crate::layout::Layout;
use crate::num::{AdamState, NodeId, ParamNodes};
use crate::scene::{
    encode_features_graph, extract_mask, feature_class_loss_graph, EncoderModel, SceneSample,
};
use crate::Tape;

use super::discriminator::{discriminate_graph, Discriminator};
use super::losses::{hinge_discriminator_graph, GanWeights};
use super::model::{decode_graph, GeneratorModel};
use super::DecoderError;

/// Pretraining hyperparameters. The quantizer runs with a hard forward
/// pass and the soft backward path at the given softness.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    pub alternations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
    pub quant_level: u8,
    pub weights: GanWeights,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            alternations: 200,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            sigma: 10.0,
            quant_level: 6,
            weights: GanWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Stage1Report {
    pub initial_l_p: f64,
    pub final_l_p: f64,
    pub last_l_d: f64,
    pub last_l_g: f64,
}

/// Per-sample constants reused across alternations.
struct SamplePrep {
    image: crate::Tensor,
    labels: Vec<u8>,
    down: Vec<Vec<u8>>,
    down_labels: Vec<u8>,
    /// [cells, n] indicator per concept for feature gating.
    cell_masks: Vec<crate::Tensor>,
}

fn prepare(sample: &SceneSample, layout: &Layout, n: usize) -> Result<SamplePrep, DecoderError> {
    let m = sample.num_classes;
    let cells = layout.cells();
    let mut down = Vec::with_capacity(m);
    let mut cell_masks = Vec::with_capacity(m);
    let mut down_labels = vec![1u8; cells];
    for class in 1..=m as u8 {
        let mask = extract_mask(&sample.labels, sample.height, sample.width, m, class)
            .map_err(|e| DecoderError::Invalid(e.to_string()))?;
        let mut data = vec![0.0; cells * n];
        for (cell, &on) in mask.down.iter().enumerate() {
            if on != 0 {
                down_labels[cell] = class;
                for k in 0..n {
                    data[cell * n + k] = 1.0;
                }
            }
        }
        cell_masks.push(crate::Tensor::new(vec![cells, n], data).expect("cell mask"));
        down.push(mask.down);
    }
    Ok(SamplePrep {
        image: sample.image.clone(),
        labels: sample.labels.clone(),
        down,
        down_labels,
        cell_masks,
    })
}

struct ForwardOut {
    fused: NodeId,
    image: NodeId,
    /// (class-id, [n, cells] quantized features, empty flag) per concept.
    class_feats: Vec<(u8, NodeId, bool)>,
}

/// Encoder -> mask decomposition -> straight-through quantization ->
/// generative decode, all on one tape.
fn forward(
    tape: &mut Tape,
    enc_nodes: &ParamNodes,
    gen_nodes: &ParamNodes,
    prep: &SamplePrep,
    layout: &Layout,
    n: usize,
    centers: &Rc<Vec<f64>>,
    sigma: f64,
) -> Result<ForwardOut, DecoderError> {
    let cells = layout.cells();
    let image = tape.input(prep.image.clone());
    let feats = encode_features_graph(tape, enc_nodes, image, layout, n)?;
    let cellwise = tape.gather(feats, Layout::transpose_map(n, cells), vec![cells, n])?;
    let mut concept_nodes = Vec::with_capacity(prep.down.len());
    let mut class_feats = Vec::with_capacity(prep.down.len());
    for (i, mask) in prep.cell_masks.iter().enumerate() {
        let mask_node = tape.constant(mask.clone());
        let gated = tape.mul(cellwise, mask_node)?;
        let quant = tape.soft_quant(gated, centers.clone(), sigma, true)?;
        // Re-gate: off-mask zeros quantize to the nearest center, which
        // is generally nonzero; the decoder contract wants them silent.
        let clean = tape.mul(quant, mask_node)?;
        concept_nodes.push(clean);
        let chanwise = tape.gather(clean, Layout::transpose_map(cells, n), vec![n, cells])?;
        let empty = prep.down[i].iter().all(|&v| v == 0);
        class_feats.push((i as u8 + 1, chanwise, empty));
    }
    let decoded = decode_graph(
        tape,
        gen_nodes,
        layout,
        &concept_nodes,
        &prep.down,
        &prep.down_labels,
    )?;
    Ok(ForwardOut { fused: decoded.fused, image, class_feats })
}

fn mean_perceptual(
    preps: &[SamplePrep],
    encoder: &EncoderModel,
    gen: &GeneratorModel,
    extractor: &PerceptualExtractor,
    layout: &Layout,
    centers: &Rc<Vec<f64>>,
    sigma: f64,
) -> Result<f64, DecoderError> {
    let mut total = 0.0;
    for prep in preps {
        let mut tape = Tape::new();
        let enc_nodes = encoder.params.feed(&mut tape);
        let gen_nodes = gen.params.feed(&mut tape);
        let out = forward(&mut tape, &enc_nodes, &gen_nodes, prep, layout, encoder.n, centers, sigma)?;
        let lp = perceptual_loss_graph(&mut tape, extractor, out.image, out.fused)?;
        total += tape.value(lp).scalar_value().map_err(DecoderError::Num)?;
    }
    Ok(total / preps.len() as f64)
}

/// Alternating discriminator/generator pretraining: one hinge step on
/// the discriminator, then one joint step on encoder and generator.
pub fn train_stage1(
    dataset: &[SceneSample],
    encoder: &mut EncoderModel,
    gen: &mut GeneratorModel,
    disc: &mut Discriminator,
    extractor: &PerceptualExtractor,
    layout: &Layout,
    config: &Stage1Config,
) -> Result<Stage1Report, DecoderError> {
    if dataset.is_empty() {
        return Err(DecoderError::Invalid("empty dataset".into()));
    }
    let centers = Rc::new(centers_for_level(config.quant_level));
    let preps: Vec<SamplePrep> = dataset
        .iter()
        .map(|s| prepare(s, layout, encoder.n))
        .collect::<Result<_, _>>()?;
    let m = dataset[0].num_classes;

    let initial_l_p =
        mean_perceptual(&preps, encoder, gen, extractor, layout, &centers, config.sigma)?;

    let mut adam_enc = AdamState::new(&encoder.params, config.beta1, config.beta2);
    let mut adam_gen = AdamState::new(&gen.params, config.beta1, config.beta2);
    let mut adam_disc = AdamState::new(&disc.params, config.beta1, config.beta2);
    let mut last_l_d = f64::NAN;
    let mut last_l_g = f64::NAN;

    for step in 0..config.alternations {
        let prep = &preps[step % preps.len()];

        // Discriminator step.
        {
            let mut tape = Tape::new();
            let enc_nodes = encoder.params.feed(&mut tape);
            let gen_nodes = gen.params.feed(&mut tape);
            let disc_nodes = disc.params.feed(&mut tape);
            let out = forward(
                &mut tape, &enc_nodes, &gen_nodes, prep, layout, encoder.n, &centers, config.sigma,
            )?;
            let real =
                discriminate_graph(&mut tape, &disc_nodes, layout, out.image, &prep.labels, m)?;
            let fake =
                discriminate_graph(&mut tape, &disc_nodes, layout, out.fused, &prep.labels, m)?;
            let l_d = hinge_discriminator_graph(&mut tape, real, fake)?;
            last_l_d = tape.value(l_d).scalar_value().map_err(DecoderError::Num)?;
            if !last_l_d.is_finite() {
                return Err(DecoderError::Diverged(step));
            }
            let grads = tape.backward(l_d)?;
            disc.params.zero_grads();
            disc.params.accumulate_grads(&disc_nodes, &grads)?;
            adam_disc.step(&mut disc.params, config.lr)?;
        }

        // Generator/encoder step.
        {
            let mut tape = Tape::new();
            let enc_nodes = encoder.params.feed(&mut tape);
            let gen_nodes = gen.params.feed(&mut tape);
            let disc_nodes = disc.params.feed(&mut tape);
            let out = forward(
                &mut tape, &enc_nodes, &gen_nodes, prep, layout, encoder.n, &centers, config.sigma,
            )?;
            let fake =
                discriminate_graph(&mut tape, &disc_nodes, layout, out.fused, &prep.labels, m)?;
            let adv = tape.scale(fake, -1.0)?;
            let l_p = perceptual_loss_graph(&mut tape, extractor, out.image, out.fused)?;
            let l_c = feature_class_loss_graph(&mut tape, &enc_nodes, &out.class_feats, m)?;
            let wp = tape.scale(l_p, config.weights.lambda1)?;
            let wc = tape.scale(l_c, config.weights.lambda2)?;
            let partial = tape.add(adv, wp)?;
            let loss = tape.add(partial, wc)?;
            last_l_g = tape.value(loss).scalar_value().map_err(DecoderError::Num)?;
            if !last_l_g.is_finite() {
                return Err(DecoderError::Diverged(step));
            }
            let grads = tape.backward(loss)?;
            encoder.params.zero_grads();
            gen.params.zero_grads();
            encoder.params.accumulate_grads(&enc_nodes, &grads)?;
            gen.params.accumulate_grads(&gen_nodes, &grads)?;
            adam_enc.step(&mut encoder.params, config.lr)?;
            adam_gen.step(&mut gen.params, config.lr)?;
        }
    }

    let final_l_p =
        mean_perceptual(&preps, encoder, gen, extractor, layout, &centers, config.sigma)?;
    Ok(Stage1Report { initial_l_p, final_l_p, last_l_d, last_l_g })
}

/// Stage III: joint encoder/generator refinement at a tenth of the
/// pretraining rate. The bit-allocation agent is refined separately by
/// its own training loop at the reduced rate; ordering is enforced here.
pub fn finetune_stage3(
    dataset: &[SceneSample],
    encoder: &mut EncoderModel,
    gen: &mut GeneratorModel,
    disc: &mut Discriminator,
    extractor: &PerceptualExtractor,
    layout: &Layout,
    config: &Stage1Config,
    stage2_complete: bool,
) -> Result<Stage1Report, DecoderError> {
    if !stage2_complete {
        return Err(DecoderError::StageOrder(
            "stage III requires a trained allocation policy".into(),
        ));
    }
    let reduced = Stage1Config { lr: config.lr / 10.0, ..config.clone() };
    train_stage1(dataset, encoder, gen, disc, extractor, layout, &reduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::RngStream;
    use crate::scene::{generate_scene, SceneConfig};

    fn tiny_setup(
        samples: usize,
    ) -> (Vec<SceneSample>, EncoderModel, GeneratorModel, Discriminator, PerceptualExtractor, Layout)
    {
        let config = SceneConfig { height: 16, width: 16, num_classes: 4, ..Default::default() };
        let dataset: Vec<SceneSample> = (0..samples)
            .map(|k| generate_scene(&mut RngStream::new(820, k as u64), &config).unwrap())
            .collect();
        let mut rng = RngStream::new(821, 0);
        let encoder = EncoderModel::new(4, 4, &mut rng);
        let gen = GeneratorModel::new(4, 4, &mut rng);
        let disc = Discriminator::new(4, &mut rng);
        let extractor = PerceptualExtractor::new(16, 16, 7);
        let layout = Layout::new(16, 16);
        (dataset, encoder, gen, disc, extractor, layout)
    }

    #[test]
    fn identical_seeds_identical_parameters() {
        let run = || {
            let (data, mut e, mut g, mut d, ext, layout) = tiny_setup(4);
            let cfg = Stage1Config { alternations: 6, ..Default::default() };
            train_stage1(&data, &mut e, &mut g, &mut d, &ext, &layout, &cfg).unwrap();
            (
                e.params.get("enc.w").unwrap().clone(),
                g.params.get("gen.glob.w").unwrap().clone(),
                d.params.get("disc.s1.w").unwrap().clone(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn training_reduces_perceptual_loss_on_tiny_run() {
        let (data, mut e, mut g, mut d, ext, layout) = tiny_setup(4);
        let cfg = Stage1Config { alternations: 60, ..Default::default() };
        let report = train_stage1(&data, &mut e, &mut g, &mut d, &ext, &layout, &cfg).unwrap();
        assert!(report.final_l_p < report.initial_l_p, "{report:?}");
    }

    #[test]
    fn stage3_requires_stage2() {
        let (data, mut e, mut g, mut d, ext, layout) = tiny_setup(2);
        let cfg = Stage1Config { alternations: 1, ..Default::default() };
        let err = finetune_stage3(&data, &mut e, &mut g, &mut d, &ext, &layout, &cfg, false);
        assert!(matches!(err, Err(DecoderError::StageOrder(_))));
    }

    #[test]
    fn discriminator_alone_fits_frozen_generator() {
        // Freeze a random generator; only train D and watch its hinge
        // loss fall below the zero-score value of 2.
        let (data, encoder, gen, mut disc, _ext, layout) = tiny_setup(4);
        let centers = Rc::new(centers_for_level(6));
        let preps: Vec<SamplePrep> =
            data.iter().map(|s| prepare(s, &layout, encoder.n).unwrap()).collect();
        let mut adam = AdamState::new(&disc.params, 0.5, 0.999);
        let mut last = f64::INFINITY;
        for step in 0..80 {
            let prep = &preps[step % preps.len()];
            let mut tape = Tape::new();
            let enc_nodes = encoder.params.feed(&mut tape);
            let gen_nodes = gen.params.feed(&mut tape);
            let disc_nodes = disc.params.feed(&mut tape);
            let out =
                forward(&mut tape, &enc_nodes, &gen_nodes, prep, &layout, encoder.n, &centers, 10.0)
                    .unwrap();
            let real =
                discriminate_graph(&mut tape, &disc_nodes, &layout, out.image, &prep.labels, 4)
                    .unwrap();
            let fake =
                discriminate_graph(&mut tape, &disc_nodes, &layout, out.fused, &prep.labels, 4)
                    .unwrap();
            let l_d = hinge_discriminator_graph(&mut tape, real, fake).unwrap();
            last = tape.value(l_d).scalar_value().unwrap();
            let grads = tape.backward(l_d).unwrap();
            disc.params.zero_grads();
            disc.params.accumulate_grads(&disc_nodes, &grads).unwrap();
            adam.step(&mut disc.params, 2e-3).unwrap();
        }
        assert!(last < 2.0, "final discriminator loss {last}");
    }

    #[test]
    fn zero_rate_finetune_leaves_parameters_unchanged() {
        let (data, mut e, mut g, mut d, ext, layout) = tiny_setup(2);
        let before = e.params.get("enc.w").unwrap().clone();
        let cfg = Stage1Config { alternations: 3, lr: 0.0, ..Default::default() };
        finetune_stage3(&data, &mut e, &mut g, &mut d, &ext, &layout, &cfg, true).unwrap();
        assert_eq!(e.params.get("enc.w").unwrap(), &before);
    }
}
