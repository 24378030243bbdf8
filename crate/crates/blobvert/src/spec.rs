//! Declarative oracle descriptions, as found in oracle spec files and the
//! `[oracle]` section of run configs.

use std::time::Duration;

use blobvert_core::oracle::{ChannelMix, Oracle, OracleError, ProjectionOracle};
use serde::{Deserialize, Serialize};

use crate::remote::{RemoteConfig, RemoteOracle};

pub type SharedOracle = Box<dyn Oracle + Send + Sync>;

fn default_size() -> usize {
    112
}

/// Parameters shared by the in-process synthetic oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub dim: usize,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default)]
    pub blur_sigma: f64,
    /// Subtract each image's mean before projecting.
    #[serde(default)]
    pub center: bool,
    /// Accept RGB input, mixing channels with these weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_weights: Option<[f64; 3]>,
}

impl SyntheticSpec {
    pub fn new(seed: u64, dim: usize, width: usize, height: usize, blur_sigma: f64) -> Self {
        Self {
            seed,
            dim,
            width,
            height,
            blur_sigma,
            center: false,
            channel_weights: None,
        }
    }

    pub fn centered(mut self) -> Self {
        self.center = true;
        self
    }

    fn build(&self, luma: bool) -> Result<ProjectionOracle, OracleError> {
        let mut oracle = ProjectionOracle::new(
            self.seed,
            self.dim,
            (self.width, self.height),
            self.blur_sigma,
        )?;
        if self.center {
            oracle = oracle.with_centering();
        }
        let mix = match (luma, self.channel_weights) {
            (true, None) => ChannelMix::Luma,
            (true, Some(_)) => {
                return Err(OracleError::InvalidParameters(
                    "luma_projection takes no channel_weights".into(),
                ))
            }
            (false, Some(w)) => ChannelMix::Weights(w),
            (false, None) => ChannelMix::Gray,
        };
        Ok(oracle.with_channel_mix(mix))
    }
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

fn default_max_batch() -> usize {
    256
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSpec {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Client-side batch cap; larger batches are split.
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    /// Requests in flight at once when a batch is split.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl RemoteSpec {
    pub fn new(endpoint: impl Into<String>, width: usize, height: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            width,
            height,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            max_batch: default_max_batch(),
            parallelism: default_parallelism(),
        }
    }

    pub fn remote_config(&self) -> Result<RemoteConfig, OracleError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(OracleError::InvalidParameters(
                "timeout_secs must be positive".into(),
            ));
        }
        if self.max_batch == 0 || self.parallelism == 0 {
            return Err(OracleError::InvalidParameters(
                "max_batch and parallelism must be at least 1".into(),
            ));
        }
        Ok(RemoteConfig {
            endpoint: self.endpoint.trim_end_matches('/').to_string(),
            input_size: (self.width, self.height),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            retries: self.retries,
            max_batch: self.max_batch,
            parallelism: self.parallelism,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    /// Blur then random projection, single channel (or RGB with
    /// `channel_weights`).
    Projection(SyntheticSpec),
    /// Projection of the luma channel; blind to chroma.
    LumaProjection(SyntheticSpec),
    /// An embedding service speaking the `/embed` protocol.
    Remote(RemoteSpec),
}

impl OracleSpec {
    pub fn input_size(&self) -> (usize, usize) {
        match self {
            Self::Projection(s) | Self::LumaProjection(s) => (s.width, s.height),
            Self::Remote(r) => (r.width, r.height),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        !matches!(self, Self::Remote(_))
    }

    /// Builds an in-process synthetic oracle; remote specs are refused.
    pub fn build_synthetic(&self) -> Result<ProjectionOracle, OracleError> {
        match self {
            Self::Projection(s) => s.build(false),
            Self::LumaProjection(s) => s.build(true),
            Self::Remote(_) => Err(OracleError::InvalidParameters(
                "a synthetic oracle spec is required".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<SharedOracle, OracleError> {
        match self {
            Self::Remote(r) => Ok(Box::new(RemoteOracle::new(r.remote_config()?)?)),
            _ => Ok(Box::new(self.build_synthetic()?)),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use blobvert_core::canvas::{GrayCanvas, RgbCanvas};

    #[test]
    fn parses_each_kind() {
        let p =
            OracleSpec::from_toml("kind = \"projection\"\nseed = 3\ndim = 128\nblur_sigma = 3.0\n")
                .unwrap();
        assert_eq!(
            p,
            OracleSpec::Projection(SyntheticSpec::new(3, 128, 112, 112, 3.0))
        );
        let l = OracleSpec::from_toml(
            "kind = \"luma_projection\"\nseed = 1\ndim = 8\nwidth = 4\nheight = 4\n",
        )
        .unwrap();
        assert!(matches!(l, OracleSpec::LumaProjection(_)));
        let r = OracleSpec::from_toml("kind = \"remote\"\nendpoint = \"http://127.0.0.1:9\"\n")
            .unwrap();
        let OracleSpec::Remote(r) = r else { panic!() };
        assert_eq!(r.timeout_secs, 30.0);
        assert_eq!(r.max_batch, 256);
    }

    #[test]
    fn rejects_unknown_fields_and_kinds() {
        assert!(
            OracleSpec::from_toml("kind = \"projection\"\nseed = 3\ndim = 4\nmatrix = 1\n")
                .is_err()
        );
        assert!(OracleSpec::from_toml("kind = \"arcface\"\nseed = 3\ndim = 4\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut s = SyntheticSpec::new(5, 16, 32, 24, 1.5).centered();
        s.channel_weights = Some([1.0, 0.0, 0.0]);
        let spec = OracleSpec::Projection(s);
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(OracleSpec::from_toml(&text).unwrap(), spec);
    }

    #[test]
    fn channel_weights_enable_rgb() {
        let mut s = SyntheticSpec::new(5, 8, 4, 4, 0.0);
        let gray = OracleSpec::Projection(s.clone()).build().unwrap();
        let rgb = RgbCanvas::from_gray(&GrayCanvas::new(4, 4).unwrap());
        assert!(gray.embed_rgb_batch(std::slice::from_ref(&rgb)).is_err());
        s.channel_weights = Some([1.0, 0.0, 0.0]);
        let red = OracleSpec::Projection(s.clone()).build().unwrap();
        assert!(red.embed_rgb_batch(&[rgb]).is_ok());
        assert!(OracleSpec::LumaProjection(s).build().is_err());
    }
}
