use std::path::Path;

use crate::codec::{
    decode_label_map, encode_label_map, ConceptSegment, HuffmanTable, QuantizerSpec,
    SemanticBitstream, StreamHeader, NUM_LEVELS,
};
use crate::decoder::{Discriminator, GeneratorModel};
use crate::io::{block_named, load_checkpoint, save_checkpoint};
use crate::layout::Layout;
use crate::num::RngStream;
use crate::policy::{rollout, update_policy, EpisodeContext, PolicySpec};
use crate::scene::{
    decompose_features, encode_features, extract_mask, generate_scene, EncoderModel, SceneConfig,
    SceneSample,
};
use crate::{ParamBlock, Tensor};

use super::config::ExperimentConfig;
use super::HarnessError;

/// Softness handed to quantizer specs on the hard coding path.
const CODEC_SIGMA: f64 = 10.0;

/// All trained parameter state of one mode.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub encoder: EncoderModel,
    pub generator: GeneratorModel,
    pub discriminator: Discriminator,
    pub policy: PolicySpec,
    /// Set once the allocation policy has been trained; gates stage III.
    pub stage2_complete: bool,
}

impl Artifacts {
    /// Freshly initialized models for a config, before any training.
    pub fn init(config: &ExperimentConfig) -> Self {
        let (n, m) = (config.mode, config.classes);
        let mut rng = RngStream::new(config.seed, 0xA17);
        Self {
            encoder: EncoderModel::new(n, m, &mut rng),
            generator: GeneratorModel::new(n, m, &mut rng),
            discriminator: Discriminator::new(m, &mut rng),
            policy: PolicySpec::new(n, m, NUM_LEVELS as usize, 1e-5, &mut rng),
            stage2_complete: false,
        }
    }
}

/// Seeded scene set; `stream_base` separates training, evaluation, and
/// noise draws sharing one experiment seed.
pub fn build_dataset(
    config: &SceneConfig,
    seed: u64,
    stream_base: u64,
    count: usize,
) -> Result<Vec<SceneSample>, HarnessError> {
    (0..count)
        .map(|i| {
            generate_scene(&mut RngStream::new(seed, stream_base + i as u64), config)
                .map_err(HarnessError::from)
        })
        .collect()
}

/// Codes one scene into a semantic bitstream at the given per-concept
/// levels.
pub fn encode_sample(
    sample: &SceneSample,
    encoder: &EncoderModel,
    layout: &Layout,
    levels: &[u8],
) -> Result<SemanticBitstream, HarnessError> {
    let m = sample.num_classes;
    if levels.len() != m {
        return Err(HarnessError::Config(format!(
            "{} levels for {m} concepts",
            levels.len()
        )));
    }
    let feats = encode_features(&sample.image, encoder, layout)?;
    let mut segments = Vec::with_capacity(m);
    for class in 1..=m as u8 {
        let level = levels[class as usize - 1];
        let mask = extract_mask(&sample.labels, sample.height, sample.width, m, class)?;
        let concept = decompose_features(&feats, &mask);
        let spec = QuantizerSpec::new(level, CODEC_SIGMA)?;
        let (_, symbols) = spec.quantize_hard(&concept.features);
        let table = HuffmanTable::build(&symbols)?;
        let payload = table.encode(&symbols)?;
        segments.push(ConceptSegment { class_id: class, level, table, payload });
    }
    Ok(SemanticBitstream {
        header: StreamHeader {
            m: m as u16,
            n: encoder.n as u16,
            w: (sample.width / 8) as u16,
            h: (sample.height / 8) as u16,
            q: NUM_LEVELS,
        },
        segments,
        label_entries: encode_label_map(&sample.labels),
    })
}

/// A reconstructed stream: the fused image, the transported label map,
/// and whether any repair was needed while decoding.
#[derive(Debug, Clone)]
pub struct DecodedStream {
    pub image: Tensor,
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub corrupted: bool,
}

/// Decodes a (possibly channel-damaged) bitstream back to an image.
/// Total: corrupted codewords and label runs degrade the output instead
/// of failing.
pub fn decode_stream(
    stream: &SemanticBitstream,
    generator: &GeneratorModel,
    layout: &Layout,
) -> Result<DecodedStream, HarnessError> {
    let header = &stream.header;
    let m = header.m as usize;
    let (height, width) = (header.h as usize * 8, header.w as usize * 8);
    if height != layout.height || width != layout.width || generator.m != m {
        return Err(HarnessError::Config(format!(
            "stream is {width}x{height} with {m} classes; decoder expects {}x{} with {}",
            layout.width, layout.height, generator.m
        )));
    }
    let (labels, mut corrupted) =
        decode_label_map(&stream.label_entries, height * width, m as u8);
    let count = header.symbols_per_concept();
    let mut concepts = Vec::with_capacity(m);
    for seg in &stream.segments {
        let outcome = seg.table.decode(&seg.payload, count);
        corrupted |= outcome.corrupted;
        let spec = QuantizerSpec::new(seg.level, CODEC_SIGMA)?;
        let alphabet = 1usize << seg.level;
        let symbols: Vec<u8> = outcome
            .symbols
            .iter()
            .map(|&s| {
                if (s as usize) < alphabet {
                    s
                } else {
                    corrupted = true;
                    0
                }
            })
            .collect();
        let feats = spec.dequantize(&symbols, vec![header.n as usize, layout.cells()])?;
        let mask = extract_mask(&labels, height, width, m, seg.class_id)?;
        concepts.push(decompose_features(&feats, &mask));
    }
    let image = crate::decoder::decode_image(generator, layout, &concepts)?;
    Ok(DecodedStream { image, labels, height, width, corrupted })
}

/// Stage II inner loop: a fixed number of episodes round-robin over the
/// contexts, one policy update per episode. Returns each episode's
/// return.
pub fn train_agent_episodes(
    contexts: &[EpisodeContext],
    policy: &mut PolicySpec,
    episodes: usize,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>, HarnessError> {
    if contexts.is_empty() {
        return Err(HarnessError::Config("no episode contexts supplied".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let traj = rollout(&contexts[i % contexts.len()], policy, gamma, rng)?;
        let g = traj.ret();
        update_policy(policy, &traj, g)?;
        returns.push(g);
    }
    Ok(returns)
}

fn meta_block(artifacts: &Artifacts) -> ParamBlock<f64> {
    let mut meta: ParamBlock<f64> = ParamBlock::new();
    let values = [
        ("n", artifacts.encoder.n as f64),
        ("m", artifacts.encoder.m as f64),
        ("q", artifacts.policy.q as f64),
        ("alpha", artifacts.policy.alpha),
        ("stage2_complete", artifacts.stage2_complete as u8 as f64),
    ];
    for (name, v) in values {
        meta.insert(name, Tensor::from_vec(vec![v]));
    }
    meta
}

fn meta_scalar(meta: &ParamBlock<f64>, name: &str) -> Result<f64, HarnessError> {
    meta.get(name)
        .map(|t| t.data()[0])
        .ok_or_else(|| HarnessError::Config(format!("checkpoint meta lacks {name:?}")))
}

pub fn save_artifacts(path: &Path, artifacts: &Artifacts) -> Result<(), HarnessError> {
    let meta = meta_block(artifacts);
    save_checkpoint(
        path,
        &[
            ("meta", &meta),
            ("encoder", &artifacts.encoder.params),
            ("generator", &artifacts.generator.params),
            ("discriminator", &artifacts.discriminator.params),
            ("policy", &artifacts.policy.params),
        ],
    )?;
    Ok(())
}

pub fn load_artifacts(path: &Path) -> Result<Artifacts, HarnessError> {
    let blocks = load_checkpoint(path)?;
    let meta = block_named(&blocks, "meta")?;
    let n = meta_scalar(&meta, "n")? as usize;
    let m = meta_scalar(&meta, "m")? as usize;
    let q = meta_scalar(&meta, "q")? as usize;
    let alpha = meta_scalar(&meta, "alpha")?;
    let stage2_complete = meta_scalar(&meta, "stage2_complete")? != 0.0;
    Ok(Artifacts {
        encoder: EncoderModel { params: block_named(&blocks, "encoder")?, n, m },
        generator: GeneratorModel { params: block_named(&blocks, "generator")?, n, m },
        discriminator: Discriminator { params: block_named(&blocks, "discriminator")?, m },
        policy: PolicySpec {
            params: block_named(&blocks, "policy")?,
            n,
            m,
            q,
            alpha,
            dropout: 0.0,
        },
        stage2_complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{transmit, ChannelSpec};

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            images: 4,
            mode: 4,
            height: 16,
            width: 16,
            classes: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn encode_decode_round_trip_is_consistent() {
        let config = small_config();
        let layout = Layout::new(config.height, config.width);
        let artifacts = Artifacts::init(&config);
        let dataset = build_dataset(&config.scene_config(), config.seed, 0, 2).unwrap();
        for sample in &dataset {
            let stream =
                encode_sample(sample, &artifacts.encoder, &layout, &[3, 3, 3, 3]).unwrap();
            // Wire round trip is bit-exact.
            let bytes = stream.serialize();
            assert_eq!(SemanticBitstream::deserialize(&bytes).unwrap(), stream);
            let out = decode_stream(&stream, &artifacts.generator, &layout).unwrap();
            assert!(!out.corrupted);
            assert_eq!(out.labels, sample.labels);
            assert_eq!((out.height, out.width), (sample.height, sample.width));
            assert_eq!(out.image.len(), 3 * layout.pixels());
        }
    }

    #[test]
    fn lossless_decode_matches_direct_reconstruction() {
        // Bitstream path and in-memory path must produce the same image.
        let config = small_config();
        let layout = Layout::new(config.height, config.width);
        let artifacts = Artifacts::init(&config);
        let sample = build_dataset(&config.scene_config(), config.seed, 0, 1)
            .unwrap()
            .remove(0);
        let levels = [2u8, 5, 1, 4];
        let stream = encode_sample(&sample, &artifacts.encoder, &layout, &levels).unwrap();
        let via_stream = decode_stream(&stream, &artifacts.generator, &layout).unwrap();

        let feats = encode_features(&sample.image, &artifacts.encoder, &layout).unwrap();
        let concepts: Vec<_> = (1..=4u8)
            .map(|c| {
                let mask = extract_mask(&sample.labels, 16, 16, 4, c).unwrap();
                let spec = QuantizerSpec::new(levels[c as usize - 1], CODEC_SIGMA).unwrap();
                let (q, _) = spec.quantize_hard(&decompose_features(&feats, &mask).features);
                decompose_features(&q, &mask)
            })
            .collect();
        let direct =
            crate::decoder::decode_image(&artifacts.generator, &layout, &concepts).unwrap();
        for (a, b) in via_stream.image.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sixty_db_channel_is_bitwise_lossless() {
        let config = small_config();
        let layout = Layout::new(config.height, config.width);
        let artifacts = Artifacts::init(&config);
        let sample = build_dataset(&config.scene_config(), config.seed, 0, 1)
            .unwrap()
            .remove(0);
        let stream = encode_sample(&sample, &artifacts.encoder, &layout, &[6, 6, 6, 6]).unwrap();
        let clean = transmit(&stream, &ChannelSpec::Lossless, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(clean, stream);
        let quiet = transmit(
            &stream,
            &ChannelSpec::Awgn { snr_db: 60.0 },
            &mut RngStream::new(1, 1),
        )
        .unwrap();
        assert_eq!(quiet, stream);
    }

    #[test]
    fn noisy_channel_decodes_totally() {
        let config = small_config();
        let layout = Layout::new(config.height, config.width);
        let artifacts = Artifacts::init(&config);
        let dataset = build_dataset(&config.scene_config(), config.seed, 0, 3).unwrap();
        for (i, sample) in dataset.iter().enumerate() {
            let stream =
                encode_sample(sample, &artifacts.encoder, &layout, &[4, 4, 4, 4]).unwrap();
            let noisy = transmit(
                &stream,
                &ChannelSpec::Awgn { snr_db: 0.0 },
                &mut RngStream::new(2, i as u64),
            )
            .unwrap();
            let out = decode_stream(&noisy, &artifacts.generator, &layout).unwrap();
            assert!(out.image.data().iter().all(|v| v.is_finite()));
            assert_eq!(out.labels.len(), sample.labels.len());
            assert!(out.labels.iter().all(|&c| c >= 1 && c <= 4));
        }
    }

    #[test]
    fn artifacts_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mode4.ckpt");
        let config = small_config();
        let mut artifacts = Artifacts::init(&config);
        artifacts.stage2_complete = true;
        artifacts.policy.alpha = 3e-6;
        save_artifacts(&path, &artifacts).unwrap();
        let back = load_artifacts(&path).unwrap();
        assert_eq!(back.encoder.n, 4);
        assert_eq!(back.encoder.m, 4);
        assert!(back.stage2_complete);
        assert_eq!(back.policy.alpha, 3e-6);
        for name in ["enc.w", "enc.b", "head.w", "head.b"] {
            assert_eq!(
                back.encoder.params.get(name).unwrap(),
                artifacts.encoder.params.get(name).unwrap()
            );
        }
        assert_eq!(
            back.policy.params.get("pol.w1").unwrap(),
            artifacts.policy.params.get("pol.w1").unwrap()
        );
    }

    #[test]
    fn mismatched_stream_rejected_with_dimensions() {
        let config = small_config();
        let layout = Layout::new(config.height, config.width);
        let artifacts = Artifacts::init(&config);
        let sample = build_dataset(&config.scene_config(), config.seed, 0, 1)
            .unwrap()
            .remove(0);
        let mut stream =
            encode_sample(&sample, &artifacts.encoder, &layout, &[1, 1, 1, 1]).unwrap();
        stream.header.h = 8;
        assert!(decode_stream(&stream, &artifacts.generator, &layout).is_err());
    }
}
