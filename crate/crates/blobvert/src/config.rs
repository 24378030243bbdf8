//! Run configuration files and their resolution into a [`RecoveryConfig`].
//!
//! ```toml
//! seed = 7
//!
//! [oracle]
//! kind = "projection"
//! seed = 1
//! dim = 128
//! blur_sigma = 3.0
//!
//! [recovery]
//! query_budget = 100000
//! batch_size = 64
//! mode = "symmetric"
//!
//! [loss]
//! lambda = 0.0025
//! ```
//!
//! Every section and field is optional except the oracle, which may also
//! come from a separate spec file. Precedence: command-line flag, then
//! `BLOBVERT_SEED` (seed only), then the file, then the built-in default.

use std::path::{Path, PathBuf};

use blobvert_core::blobs::{DictionaryGrid, Interval, SamplerConfig};
use blobvert_core::objective::LossParams;
use blobvert_core::recovery::{InitMode, RecoveryConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::OracleSpec;

pub const SEED_ENV: &str = "BLOBVERT_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{SEED_ENV}={value:?} is not an unsigned 64-bit integer")]
    BadSeedEnv { value: String },
    #[error("no oracle given: add an [oracle] section or pass --oracle")]
    MissingOracle,
    #[error("face_image initialization needs an init_face image")]
    MissingInitFace,
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Whether sampled blobs are rendered with their mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Symmetric,
    Asymmetric,
}

impl Mode {
    pub fn is_symmetric(self) -> bool {
        self == Mode::Symmetric
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    pub query_budget: Option<u64>,
    pub batch_size: Option<usize>,
    pub fade_factor: Option<f64>,
    pub mode: Option<Mode>,
    pub init_mode: Option<InitMode>,
    /// Relative paths resolve against the config file's directory.
    pub init_face: Option<PathBuf>,
    /// Resize an init image of the wrong size instead of refusing it.
    pub resize_init: Option<bool>,
    pub cosine_only: Option<bool>,
    pub include_identity_candidate: Option<bool>,
    pub record_batch_losses: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub x0_range: Option<Interval>,
    pub y0_range: Option<Interval>,
    pub sigma_range: Option<Interval>,
    pub amplitude_range: Option<Interval>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    pub x0_values: Option<Vec<f64>>,
    pub y0_values: Option<Vec<f64>>,
    pub sigma1_values: Option<Vec<f64>>,
    pub sigma2_values: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
}

/// A run-config file as written, before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub recovery: RecoverySection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub dictionary: DictionarySection,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub oracle: Option<OracleSpec>,
    pub query_budget: Option<u64>,
    pub batch_size: Option<usize>,
    pub mode: Option<Mode>,
    pub init_face: Option<PathBuf>,
    pub cosine_only: Option<bool>,
}

/// Where the seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Env,
    File,
    Default,
}

/// Everything a run needs, with all defaults filled in. Written next to the
/// run's outputs so the run can be replayed from it alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub seed_source: SeedSource,
    pub mode: Mode,
    pub oracle: OracleSpec,
    pub recovery: RecoveryConfig,
    pub init_face: Option<PathBuf>,
    pub resize_init: bool,
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.display().to_string(),
            message: e.to_string(),
        })?;
        if let (Some(face), Some(dir)) = (&config.recovery.init_face, origin.parent()) {
            if face.is_relative() {
                config.recovery.init_face = Some(dir.join(face));
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read_text(path)?, path)
    }

    /// The `[dictionary]` section over the default grid for this canvas.
    pub fn dictionary_grid(&self, width: usize, height: usize) -> DictionaryGrid {
        let d = &self.dictionary;
        let grid = DictionaryGrid::default_for(width, height);
        DictionaryGrid {
            x0_values: d.x0_values.clone().unwrap_or(grid.x0_values),
            y0_values: d.y0_values.clone().unwrap_or(grid.y0_values),
            sigma1_values: d.sigma1_values.clone().unwrap_or(grid.sigma1_values),
            sigma2_values: d.sigma2_values.clone().unwrap_or(grid.sigma2_values),
            amplitude: d.amplitude.unwrap_or(grid.amplitude),
        }
    }

    /// Applies overrides, the environment seed and defaults.
    pub fn resolve(
        &self,
        overrides: &Overrides,
        env_seed: Option<&str>,
    ) -> Result<ResolvedConfig, ConfigError> {
        let oracle = overrides
            .oracle
            .clone()
            .or_else(|| self.oracle.clone())
            .ok_or(ConfigError::MissingOracle)?;
        let (width, height) = oracle.input_size();
        if width == 0 || height == 0 {
            return Err(ConfigError::Invalid(
                "oracle input size must be non-zero".into(),
            ));
        }
        let env_seed = env_seed
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| ConfigError::BadSeedEnv {
                        value: v.to_string(),
                    })
            })
            .transpose()?;
        let (seed, seed_source) = match (overrides.seed, env_seed, self.seed) {
            (Some(s), _, _) => (s, SeedSource::Flag),
            (None, Some(s), _) => (s, SeedSource::Env),
            (None, None, Some(s)) => (s, SeedSource::File),
            (None, None, None) => (0, SeedSource::Default),
        };

        let r = &self.recovery;
        let mode = overrides.mode.or(r.mode).unwrap_or(Mode::Symmetric);
        let init_face = overrides.init_face.clone().or_else(|| r.init_face.clone());
        let init_mode = r.init_mode.unwrap_or(if init_face.is_some() {
            InitMode::FaceImage
        } else {
            InitMode::Dictionary
        });
        if init_mode == InitMode::FaceImage && init_face.is_none() {
            return Err(ConfigError::MissingInitFace);
        }

        let mut recovery = RecoveryConfig::new(width, height);
        recovery.seed = seed;
        recovery.init_mode = init_mode;
        recovery.query_budget = overrides
            .query_budget
            .or(r.query_budget)
            .unwrap_or(recovery.query_budget);
        recovery.batch_size = overrides
            .batch_size
            .or(r.batch_size)
            .unwrap_or(recovery.batch_size);
        recovery.fade_factor = r.fade_factor.unwrap_or(recovery.fade_factor);
        recovery.cosine_only = overrides.cosine_only.or(r.cosine_only);
        recovery.include_identity_candidate = r
            .include_identity_candidate
            .unwrap_or(recovery.include_identity_candidate);
        recovery.record_batch_losses = r.record_batch_losses.unwrap_or(false);
        recovery.loss = LossParams {
            lambda: self.loss.lambda.unwrap_or(LossParams::DEFAULT_LAMBDA),
        };

        let s = &self.sampler;
        let defaults = SamplerConfig::for_canvas(width, height);
        recovery.sampler = SamplerConfig {
            x0_range: s.x0_range.unwrap_or(defaults.x0_range),
            y0_range: s.y0_range.unwrap_or(defaults.y0_range),
            sigma_range: s.sigma_range.unwrap_or(defaults.sigma_range),
            amplitude_range: s.amplitude_range.unwrap_or(defaults.amplitude_range),
            symmetric: mode.is_symmetric(),
            seed,
        };

        recovery.dictionary = self.dictionary_grid(width, height);

        recovery
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if init_mode == InitMode::Dictionary && recovery.dictionary.is_empty() {
            return Err(ConfigError::Invalid("dictionary grid is empty".into()));
        }
        Ok(ResolvedConfig {
            seed,
            seed_source,
            mode,
            oracle,
            recovery,
            init_face,
            resize_init: r.resize_init.unwrap_or(false),
        })
    }
}

impl ResolvedConfig {
    /// JSON, since seeds may exceed the TOML integer range.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("resolved config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Reads `BLOBVERT_SEED` from the process environment.
pub fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

pub fn load_oracle_spec(path: &Path) -> Result<OracleSpec, ConfigError> {
    OracleSpec::from_toml(&read_text(path)?).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
