use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rlsc::codec::{SemanticBitstream, NUM_LEVELS};
use rlsc::criterion::{criterion_report, miou_loss, perceptual_loss};
use rlsc::decoder::{train_stage1, finetune_stage3, Stage1Config};
use rlsc::harness::{
    bd_metric, build_dataset, decode_stream, encode_sample, fit_oracle, load_artifacts,
    mode_checkpoint_path, perceptual_extractor, run_rd_sweep, save_artifacts, train_agent_episodes,
    transmit, Artifacts, BdMode, CurvePoint, ExperimentConfig,
};
use rlsc::io::{read_pgm, read_ppm, write_pgm, write_ppm};
use rlsc::layout::Layout;
use rlsc::num::RngStream;
use rlsc::policy::EpisodeContext;
use rlsc::scene::SceneSample;

#[derive(Parser)]
#[command(name = "rlsc", version, about = "Semantic image codec with learned bit allocation")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Plain-text key=value experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (file or directory, command-dependent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the seeded scene dataset as PPM/PGM pairs.
    GenData {
        /// Number of scenes (defaults to the config's dataset size).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Stage I: adversarial reconstruction training at the finest level.
    TrainStage1 {
        #[arg(long)]
        alternations: Option<usize>,
    },
    /// Stage II: REINFORCE training of the level-selection policy.
    TrainAgent {
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        /// Policy step size (overrides the checkpoint's).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Stage III: joint fine-tuning at reduced step sizes.
    Finetune {
        #[arg(long)]
        alternations: Option<usize>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
    },
    /// Codes a PPM image + PGM label map into an .rlsc bitstream.
    Encode {
        image: PathBuf,
        labels: PathBuf,
        /// Per-concept levels, comma-separated; one value broadcasts.
        #[arg(long, default_value = "6")]
        levels: String,
    },
    /// Reconstructs an image (PPM) and label map (PGM) from a bitstream.
    Decode { stream: PathBuf },
    /// Codes and reconstructs one image, printing the criterion as JSON.
    Eval {
        image: PathBuf,
        labels: PathBuf,
        #[arg(long, default_value = "6")]
        levels: String,
    },
    /// Rate-quality sweep over all modes and level policies, as CSV.
    Sweep,
    /// Bjontegaard delta between two rate-quality CSV curves.
    Bd {
        curve_a: PathBuf,
        curve_b: PathBuf,
        #[arg(long, value_enum, default_value_t = BdArg::Rate)]
        mode: BdArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BdArg {
    /// Average rate difference in percent at equal quality.
    Rate,
    /// Average quality difference at equal rate.
    Quality,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            ExperimentConfig::parse(&text).map_err(|e| e.to_string())?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn parse_levels(text: &str, m: usize) -> Result<Vec<u8>, String> {
    let parts: Vec<u8> = text
        .split(',')
        .map(|p| p.trim().parse::<u8>().map_err(|_| format!("bad level {p:?}")))
        .collect::<Result<_, _>>()?;
    let levels = match parts.len() {
        1 => vec![parts[0]; m],
        k if k == m => parts,
        k => return Err(format!("got {k} levels for {m} concepts")),
    };
    if let Some(&l) = levels.iter().find(|&&l| l < 1 || l > NUM_LEVELS) {
        return Err(format!("level {l} outside 1..={NUM_LEVELS}"));
    }
    Ok(levels)
}

fn sample_from_files(
    image_path: &Path,
    labels_path: &Path,
    m: usize,
) -> Result<SceneSample, String> {
    let (image, h, w) = read_ppm(image_path).map_err(|e| e.to_string())?;
    let (labels, lh, lw) = read_pgm(labels_path).map_err(|e| e.to_string())?;
    if (h, w) != (lh, lw) {
        return Err(format!("image is {w}x{h} but label map is {lw}x{lh}"));
    }
    if let Some(&c) = labels.iter().find(|&&c| c < 1 || c as usize > m) {
        return Err(format!("label {c} outside 1..={m}"));
    }
    Ok(SceneSample { image, labels, height: h, width: w, num_classes: m })
}

fn checkpoint(config: &ExperimentConfig) -> PathBuf {
    mode_checkpoint_path(&config.artifacts_dir, config.mode)
}

fn load_trained(config: &ExperimentConfig) -> Result<Artifacts, String> {
    let path = checkpoint(config);
    if !path.exists() {
        return Err(format!(
            "no checkpoint for mode n={} at {} (run train-stage1 first)",
            config.mode,
            path.display()
        ));
    }
    load_artifacts(&path).map_err(|e| e.to_string())
}

fn out_or(cli_out: &Option<PathBuf>, default: &str) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (a, b) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(rate), Ok(quality)) => points.push(CurvePoint { rate, quality }),
            _ if i == 0 => continue, // header row
            _ => return Err(format!("{}:{}: expected rate,quality", path.display(), i + 1)),
        }
    }
    Ok(points)
}

fn run(cli: Cli) -> Result<(), String> {
    let config = load_config(&cli)?;
    config.validate().map_err(|e| e.to_string())?;
    let layout = Layout::new(config.height, config.width);

    match &cli.command {
        Command::GenData { count } => {
            let count = count.unwrap_or(config.images);
            let out_dir = out_or(&cli.out, &config.out_dir);
            fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
            let dataset = build_dataset(&config.scene_config(), config.seed, 0, count)
                .map_err(|e| e.to_string())?;
            for (i, sample) in dataset.iter().enumerate() {
                write_ppm(
                    &out_dir.join(format!("scene{i:04}.ppm")),
                    &sample.image,
                    sample.height,
                    sample.width,
                )
                .map_err(|e| e.to_string())?;
                write_pgm(
                    &out_dir.join(format!("scene{i:04}.pgm")),
                    &sample.labels,
                    sample.height,
                    sample.width,
                )
                .map_err(|e| e.to_string())?;
            }
            println!("wrote {count} scenes to {}", out_dir.display());
        }
        Command::TrainStage1 { alternations } => {
            let mut artifacts = Artifacts::init(&config);
            let dataset = build_dataset(&config.scene_config(), config.seed, 0, config.images)
                .map_err(|e| e.to_string())?;
            let extractor = perceptual_extractor(&config);
            let mut stage1 = Stage1Config::default();
            if let Some(a) = alternations {
                stage1.alternations = *a;
            }
            let report = train_stage1(
                &dataset,
                &mut artifacts.encoder,
                &mut artifacts.generator,
                &mut artifacts.discriminator,
                &extractor,
                &layout,
                &stage1,
            )
            .map_err(|e| e.to_string())?;
            let path = checkpoint(&config);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            save_artifacts(&path, &artifacts).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
        }
        Command::TrainAgent { episodes, alpha } => {
            let mut artifacts = load_trained(&config)?;
            if let Some(a) = alpha {
                artifacts.policy.alpha = *a;
            }
            let dataset = build_dataset(&config.scene_config(), config.seed, 0, config.images)
                .map_err(|e| e.to_string())?;
            let oracle = fit_oracle(&config).map_err(|e| e.to_string())?;
            let extractor = perceptual_extractor(&config);
            let ctxs: Vec<EpisodeContext> = dataset
                .iter()
                .map(|s| {
                    EpisodeContext::new(
                        s,
                        &artifacts.encoder,
                        &artifacts.generator,
                        &oracle,
                        &extractor,
                        &layout,
                        config.weights,
                        NUM_LEVELS,
                    )
                    .map_err(|e| e.to_string())
                })
                .collect::<Result<_, _>>()?;
            let mut rng = RngStream::new(config.seed, 0x57A6E2);
            let returns =
                train_agent_episodes(&ctxs, &mut artifacts.policy, *episodes, 0.99, &mut rng)
                    .map_err(|e| e.to_string())?;
            artifacts.stage2_complete = true;
            save_artifacts(&checkpoint(&config), &artifacts).map_err(|e| e.to_string())?;
            let tail = returns.len().saturating_sub(20);
            let late: f64 =
                returns[tail..].iter().sum::<f64>() / (returns.len() - tail).max(1) as f64;
            println!(
                "{}",
                serde_json::json!({
                    "episodes": episodes,
                    "mean_return": returns.iter().sum::<f64>() / returns.len() as f64,
                    "late_mean_return": late,
                })
            );
        }
        Command::Finetune { alternations, episodes } => {
            let mut artifacts = load_trained(&config)?;
            let dataset = build_dataset(&config.scene_config(), config.seed, 0, config.images)
                .map_err(|e| e.to_string())?;
            let extractor = perceptual_extractor(&config);
            let mut stage1 = Stage1Config::default();
            if let Some(a) = alternations {
                stage1.alternations = *a;
            }
            let report = finetune_stage3(
                &dataset,
                &mut artifacts.encoder,
                &mut artifacts.generator,
                &mut artifacts.discriminator,
                &extractor,
                &layout,
                &stage1,
                artifacts.stage2_complete,
            )
            .map_err(|e| e.to_string())?;
            // Refine the allocation policy at a tenth of the step size.
            let oracle = fit_oracle(&config).map_err(|e| e.to_string())?;
            let ctxs: Vec<EpisodeContext> = dataset
                .iter()
                .map(|s| {
                    EpisodeContext::new(
                        s,
                        &artifacts.encoder,
                        &artifacts.generator,
                        &oracle,
                        &extractor,
                        &layout,
                        config.weights,
                        NUM_LEVELS,
                    )
                    .map_err(|e| e.to_string())
                })
                .collect::<Result<_, _>>()?;
            artifacts.policy.alpha /= 10.0;
            let mut rng = RngStream::new(config.seed, 0x57A6E3);
            train_agent_episodes(&ctxs, &mut artifacts.policy, *episodes, 0.99, &mut rng)
                .map_err(|e| e.to_string())?;
            save_artifacts(&checkpoint(&config), &artifacts).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
        }
        Command::Encode { image, labels, levels } => {
            let artifacts = load_trained(&config)?;
            let sample = sample_from_files(image, labels, config.classes)?;
            if (sample.height, sample.width) != (config.height, config.width) {
                return Err(format!(
                    "input is {}x{}, config expects {}x{}",
                    sample.width, sample.height, config.width, config.height
                ));
            }
            let levels = parse_levels(levels, config.classes)?;
            let stream = encode_sample(&sample, &artifacts.encoder, &layout, &levels)
                .map_err(|e| e.to_string())?;
            let out = out_or(&cli.out, "out.rlsc");
            fs::write(&out, stream.serialize()).map_err(|e| e.to_string())?;
            let rate = stream.rate_psi();
            println!("{}", serde_json::to_string(&rate).map_err(|e| e.to_string())?);
        }
        Command::Decode { stream } => {
            let artifacts = load_trained(&config)?;
            let bytes = fs::read(stream)
                .map_err(|e| format!("cannot read {}: {e}", stream.display()))?;
            let parsed = SemanticBitstream::deserialize(&bytes).map_err(|e| e.to_string())?;
            let received = transmit(&parsed, &config.channel, &mut RngStream::new(config.seed, 0))
                .map_err(|e| e.to_string())?;
            let out = decode_stream(&received, &artifacts.generator, &layout)
                .map_err(|e| e.to_string())?;
            let image_path = out_or(&cli.out, "decoded.ppm");
            write_ppm(&image_path, &out.image, out.height, out.width)
                .map_err(|e| e.to_string())?;
            let labels_path = image_path.with_extension("pgm");
            write_pgm(&labels_path, &out.labels, out.height, out.width)
                .map_err(|e| e.to_string())?;
            println!(
                "wrote {} and {} (corrupted: {})",
                image_path.display(),
                labels_path.display(),
                out.corrupted
            );
        }
        Command::Eval { image, labels, levels } => {
            let artifacts = load_trained(&config)?;
            let sample = sample_from_files(image, labels, config.classes)?;
            let levels = parse_levels(levels, config.classes)?;
            let stream = encode_sample(&sample, &artifacts.encoder, &layout, &levels)
                .map_err(|e| e.to_string())?;
            let received = transmit(&stream, &config.channel, &mut RngStream::new(config.seed, 0))
                .map_err(|e| e.to_string())?;
            let out = decode_stream(&received, &artifacts.generator, &layout)
                .map_err(|e| e.to_string())?;
            let oracle = fit_oracle(&config).map_err(|e| e.to_string())?;
            let extractor = perceptual_extractor(&config);
            let l_s = miou_loss(
                &oracle.predict_labels(&sample.image),
                &oracle.predict_labels(&out.image),
                config.classes,
            );
            let l_p = perceptual_loss(&sample.image, &out.image, &extractor)
                .map_err(|e| e.to_string())?;
            let report =
                criterion_report(stream.rate_psi().psi_bpp, l_s, l_p, &config.weights);
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
        }
        Command::Sweep => {
            let table = run_rd_sweep(&config).map_err(|e| e.to_string())?;
            let csv = table.to_csv();
            match &cli.out {
                Some(path) => {
                    fs::write(path, &csv).map_err(|e| e.to_string())?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Bd { curve_a, curve_b, mode } => {
            let a = read_curve(curve_a)?;
            let b = read_curve(curve_b)?;
            let bd_mode = match mode {
                BdArg::Rate => BdMode::Rate,
                BdArg::Quality => BdMode::Quality,
            };
            let value = bd_metric(&a, &b, bd_mode).map_err(|e| e.to_string())?;
            let csv = format!(
                "metric,value\n{},{value:.9}\n",
                match bd_mode {
                    BdMode::Rate => "bd-rate-percent",
                    BdMode::Quality => "bd-quality",
                }
            );
            match &cli.out {
                Some(path) => {
                    fs::write(path, &csv).map_err(|e| e.to_string())?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
