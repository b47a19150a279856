use crate::criterion::CriterionWeights;
use crate::scene::SceneConfig;

use super::channel::ChannelSpec;
use super::HarnessError;

/// Desk-scale analysis modes: feature channels per concept.
pub const MODES: [usize; 3] = [4, 8, 16];

/// Everything that determines an experiment's outputs, parsed from a
/// plain-text `key=value` file. Config plus seed fully determines every
/// artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Dataset size (number of scenes).
    pub images: usize,
    /// Feature channels per concept.
    pub mode: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub channel: ChannelSpec,
    pub weights: CriterionWeights,
    pub out_dir: String,
    pub artifacts_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            images: 64,
            mode: 8,
            height: 32,
            width: 64,
            classes: 8,
            channel: ChannelSpec::Lossless,
            weights: CriterionWeights::default(),
            out_dir: "out".into(),
            artifacts_dir: "artifacts".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            height: self.height,
            width: self.width,
            num_classes: self.classes,
            ..SceneConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !MODES.contains(&self.mode) {
            return Err(HarnessError::Config(format!(
                "mode must be one of {MODES:?}, got {}",
                self.mode
            )));
        }
        if self.images == 0 {
            return Err(HarnessError::Config("images must be positive".into()));
        }
        self.channel.validate()?;
        self.weights
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.scene_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut config = Self::default();
        let mut snr_db: Option<f64> = None;
        let mut awgn = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                HarnessError::Config(format!("line {}: bad {what} value {value:?}", lineno + 1))
            };
            match key {
                "seed" => config.seed = value.parse().map_err(|_| bad("seed"))?,
                "images" => config.images = value.parse().map_err(|_| bad("images"))?,
                "mode" => config.mode = value.parse().map_err(|_| bad("mode"))?,
                "height" => config.height = value.parse().map_err(|_| bad("height"))?,
                "width" => config.width = value.parse().map_err(|_| bad("width"))?,
                "classes" => config.classes = value.parse().map_err(|_| bad("classes"))?,
                "channel" => match value {
                    "lossless" => awgn = false,
                    "awgn" => awgn = true,
                    _ => return Err(bad("channel")),
                },
                "snr_db" => snr_db = Some(value.parse().map_err(|_| bad("snr_db"))?),
                "lambda" => config.weights.lambda = value.parse().map_err(|_| bad("lambda"))?,
                "eta" => config.weights.eta = value.parse().map_err(|_| bad("eta"))?,
                "out" => config.out_dir = value.to_string(),
                "artifacts" => config.artifacts_dir = value.to_string(),
                _ => {
                    return Err(HarnessError::Config(format!(
                        "line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if awgn {
            let snr_db = snr_db.ok_or_else(|| {
                HarnessError::Config("channel=awgn requires snr_db".into())
            })?;
            config.channel = ChannelSpec::Awgn { snr_db };
        }
        config.validate()?;
        Ok(config)
    }

    /// Canonical text form; `parse` of the output reproduces the config.
    pub fn to_text(&self) -> String {
        let channel = match self.channel {
            ChannelSpec::Lossless => "channel=lossless\n".to_string(),
            ChannelSpec::Awgn { snr_db } => format!("channel=awgn\nsnr_db={snr_db}\n"),
        };
        format!(
            "seed={}\nimages={}\nmode={}\nheight={}\nwidth={}\nclasses={}\n{}lambda={}\neta={}\nout={}\nartifacts={}\n",
            self.seed,
            self.images,
            self.mode,
            self.height,
            self.width,
            self.classes,
            channel,
            self.weights.lambda,
            self.weights.eta,
            self.out_dir,
            self.artifacts_dir,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let config = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&config.to_text()).unwrap(), config);
    }

    #[test]
    fn awgn_round_trip_and_comments() {
        let text = "
            # evaluation run
            seed = 99
            mode = 16
            channel = awgn
            snr_db = 7.5  # decibels
        ";
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.mode, 16);
        assert_eq!(config.channel, ChannelSpec::Awgn { snr_db: 7.5 });
        assert_eq!(ExperimentConfig::parse(&config.to_text()).unwrap(), config);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(ExperimentConfig::parse("unknown=1").is_err());
        assert!(ExperimentConfig::parse("mode=5").is_err());
        assert!(ExperimentConfig::parse("channel=awgn").is_err());
        assert!(ExperimentConfig::parse("no equals sign here").is_err());
        assert!(ExperimentConfig::parse("images=0").is_err());
        assert!(ExperimentConfig::parse("height=30").is_err());
    }
}
