use std::path::{Path, PathBuf};

use crate::codec::NUM_LEVELS;
use crate::criterion::{
    frechet_proxy, miou, perceptual_loss, pixel_metrics, PerceptualExtractor,
};
use crate::layout::Layout;
use crate::num::RngStream;
use crate::policy::{greedy_levels, EpisodeContext};
use crate::scene::{SceneSample, TaskKind, TaskOracle};
use crate::Tensor;

use super::channel::transmit;
use super::config::{ExperimentConfig, MODES};
use super::pipeline::{build_dataset, decode_stream, encode_sample, load_artifacts, Artifacts};
use super::{CurvePoint, HarnessError};

/// Stream bases partitioning one experiment seed into independent draws.
pub const EVAL_STREAM_BASE: u64 = 1_000_000;
const CHANNEL_STREAM_BASE: u64 = 7_000_000;
const ORACLE_STREAM: u64 = 0x0C17;
const EXTRACTOR_STREAM: u64 = 0x0C18;

/// Noise stream for one evaluated image. It depends only on the seed and
/// the image index, so different SNRs and policy variants reuse the same
/// underlying noise draws (common random numbers).
pub fn channel_rng(seed: u64, image_index: usize) -> RngStream {
    RngStream::new(seed, CHANNEL_STREAM_BASE + image_index as u64)
}

/// The evaluation-set task oracle for a config.
pub fn fit_oracle(config: &ExperimentConfig) -> Result<TaskOracle, HarnessError> {
    Ok(TaskOracle::fit(
        TaskKind::Segmentation,
        &config.scene_config(),
        config.seed.wrapping_add(ORACLE_STREAM),
    )?)
}

/// The frozen perceptual extractor for a config.
pub fn perceptual_extractor(config: &ExperimentConfig) -> PerceptualExtractor {
    PerceptualExtractor::new(
        config.height,
        config.width,
        config.seed.wrapping_add(EXTRACTOR_STREAM),
    )
}

/// Level-selection strategy being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyVariant {
    Learned,
    Uniform(u8),
}

impl PolicyVariant {
    pub fn label(&self) -> String {
        match self {
            PolicyVariant::Learned => "learned".into(),
            PolicyVariant::Uniform(l) => format!("uniform{l}"),
        }
    }

    pub fn all() -> Vec<Self> {
        let mut v = vec![PolicyVariant::Learned];
        v.extend((1..=NUM_LEVELS).map(PolicyVariant::Uniform));
        v
    }
}

/// Aggregate metrics of one (mode, variant) evaluation, with the
/// per-image series kept for distributional checks.
#[derive(Debug, Clone)]
pub struct VariantEval {
    pub bpp: f64,
    pub miou: f64,
    pub l_p: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub frechet: f64,
    pub per_image_bpp: Vec<f64>,
    pub per_image_miou: Vec<f64>,
    pub mean_composite: f64,
}

/// 24-number image descriptor for the set-level Fréchet proxy: the mean
/// of each projected feature channel at each scale.
fn proxy_descriptor(
    extractor: &PerceptualExtractor,
    image: &Tensor,
) -> Result<Vec<f64>, HarnessError> {
    let mut out = Vec::new();
    for feat in extractor.features(image)? {
        let (rows, cols) = feat.rows_cols();
        for c in 0..cols {
            let sum: f64 = (0..rows).map(|r| feat.data()[r * cols + c]).sum();
            out.push(sum / rows as f64);
        }
    }
    Ok(out)
}

/// Encodes, transmits, and decodes the evaluation set under one level
/// policy, returning rate and quality aggregates.
pub fn evaluate_variant(
    artifacts: &Artifacts,
    config: &ExperimentConfig,
    dataset: &[SceneSample],
    oracle: &TaskOracle,
    extractor: &PerceptualExtractor,
    layout: &Layout,
    variant: PolicyVariant,
) -> Result<VariantEval, HarnessError> {
    if dataset.is_empty() {
        return Err(HarnessError::Config("empty evaluation set".into()));
    }
    let m = config.classes;
    let mut sums = [0.0f64; 5];
    let mut per_image_bpp = Vec::with_capacity(dataset.len());
    let mut per_image_miou = Vec::with_capacity(dataset.len());
    let mut originals = Vec::with_capacity(dataset.len());
    let mut recons = Vec::with_capacity(dataset.len());
    let mut composite_sum = 0.0;
    for (i, sample) in dataset.iter().enumerate() {
        let levels = match variant {
            PolicyVariant::Uniform(l) => vec![l; m],
            PolicyVariant::Learned => {
                let ctx = EpisodeContext::new(
                    sample,
                    &artifacts.encoder,
                    &artifacts.generator,
                    oracle,
                    extractor,
                    layout,
                    config.weights,
                    NUM_LEVELS,
                )?;
                greedy_levels(&ctx, &artifacts.policy)?
            }
        };
        let stream = encode_sample(sample, &artifacts.encoder, layout, &levels)?;
        let bpp = stream.rate_psi().psi_bpp;
        let received = transmit(&stream, &config.channel, &mut channel_rng(config.seed, i))?;
        let out = decode_stream(&received, &artifacts.generator, layout)?;

        let gt = oracle.predict_labels(&sample.image);
        let pred = oracle.predict_labels(&out.image);
        let iou = miou(&gt, &pred, m);
        let l_p = perceptual_loss(&sample.image, &out.image, extractor)?;
        let px = pixel_metrics(&sample.image, &out.image, sample.height, sample.width);

        sums[0] += bpp;
        sums[1] += iou;
        sums[2] += l_p;
        sums[3] += px.psnr_db;
        sums[4] += px.ssim;
        composite_sum +=
            config.weights.lambda * bpp + (1.0 - iou) + config.weights.eta * l_p;
        per_image_bpp.push(bpp);
        per_image_miou.push(iou);
        originals.push(proxy_descriptor(extractor, &sample.image)?);
        recons.push(proxy_descriptor(extractor, &out.image)?);
    }
    let k = dataset.len() as f64;
    let frechet = if dataset.len() >= 2 {
        frechet_proxy(&originals, &recons).map_err(|e| HarnessError::Config(e.to_string()))?
    } else {
        f64::NAN
    };
    Ok(VariantEval {
        bpp: sums[0] / k,
        miou: sums[1] / k,
        l_p: sums[2] / k,
        psnr: sums[3] / k,
        ssim: sums[4] / k,
        frechet,
        per_image_bpp,
        per_image_miou,
        mean_composite: composite_sum / k,
    })
}

/// One CSV row of the rate-quality sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub mode: usize,
    pub policy: String,
    pub bpp: f64,
    pub miou: f64,
    pub l_p: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub frechet: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,policy,bpp,miou,l_p,psnr,ssim,frechet\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                r.mode, r.policy, r.bpp, r.miou, r.l_p, r.psnr, r.ssim, r.frechet
            ));
        }
        out
    }

    /// Rate-mIoU curve of one mode's uniform-level rows, in level order.
    pub fn curve_for_mode(&self, mode: usize) -> Vec<CurvePoint> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode && r.policy.starts_with("uniform"))
            .map(|r| CurvePoint { rate: r.bpp, quality: r.miou })
            .collect()
    }
}

pub fn mode_checkpoint_path(artifacts_dir: &str, mode: usize) -> PathBuf {
    Path::new(artifacts_dir).join(format!("mode{mode}.ckpt"))
}

/// Full sweep: every mode with trained artifacts, evaluated under the
/// learned policy and all six uniform-level policies.
pub fn run_rd_sweep(config: &ExperimentConfig) -> Result<SweepTable, HarnessError> {
    config.validate()?;
    let layout = Layout::new(config.height, config.width);
    let oracle = fit_oracle(config)?;
    let extractor = perceptual_extractor(config);
    let dataset = build_dataset(
        &config.scene_config(),
        config.seed,
        EVAL_STREAM_BASE,
        config.images,
    )?;
    let mut table = SweepTable::default();
    for &mode in &MODES {
        let path = mode_checkpoint_path(&config.artifacts_dir, mode);
        if !path.exists() {
            return Err(HarnessError::MissingCheckpoint {
                mode,
                path: path.display().to_string(),
            });
        }
        let artifacts = load_artifacts(&path)?;
        if artifacts.encoder.n != mode {
            return Err(HarnessError::Config(format!(
                "checkpoint {} holds n={}, expected {mode}",
                path.display(),
                artifacts.encoder.n
            )));
        }
        for variant in PolicyVariant::all() {
            let eval = evaluate_variant(
                &artifacts, config, &dataset, &oracle, &extractor, &layout, variant,
            )?;
            table.rows.push(SweepRow {
                mode,
                policy: variant.label(),
                bpp: eval.bpp,
                miou: eval.miou,
                l_p: eval.l_p,
                psnr: eval.psnr,
                ssim: eval.ssim,
                frechet: eval.frechet,
            });
        }
    }
    Ok(table)
}
