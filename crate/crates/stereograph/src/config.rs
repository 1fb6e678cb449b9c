//! Run configuration shared by the trainer and the CLI.
//!
//! Values come from three layers: built-in defaults, an optional TOML config
//! file, and command-line flags (strongest). Unknown keys in a config file
//! are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EncoderMode, Fusion};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config file parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

/// How the space curvatures behave over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMode {
    /// Per-interval estimates from the neural curvature estimator.
    Evolve,
    /// One dataset-level observed estimate, fixed across intervals.
    Static,
    /// Flat spaces throughout.
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Event-log path.
    pub data: Option<PathBuf>,
    /// Embedding dimension.
    pub dim: usize,
    /// Number of time intervals the training timeline is split into.
    pub intervals: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Hard-sample reweighing strength.
    pub eta: f64,
    /// Weight of the item-side contrast in the overall loss.
    pub w1: f64,
    /// Weight of the curvature loss in the overall loss.
    pub w2: f64,
    /// Lazy-walk share kept at the center node in Ricci mass distributions.
    pub alpha: f64,
    /// Shared-counterpart threshold for co-occurrence linking.
    pub k: usize,
    /// Fraction of active entities kept when extracting curvature subgraphs.
    pub sample_ratio: f64,
    /// Aggregation layers stacked per interval.
    pub layers: usize,
    pub fusion: FusionOpt,
    pub encoder: EncoderOpt,
    pub curvature: CurvatureMode,
    /// Disable hard-sample reweighing (forces eta = 0).
    pub no_reweigh: bool,
    /// Drop counterpart-space positives from the contrast.
    pub no_cocon: bool,
    /// Replace the learned time kernel with an exponential decay.
    pub no_kernel: bool,
    /// Negative samples per anchor.
    pub negatives: usize,
    pub seed: u64,
    /// Output directory; falls back to `STEREOGRAPH_OUT`, then `.`.
    pub out_dir: Option<PathBuf>,
}

/// Serializable mirror of [`Fusion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionOpt {
    Early,
    Late,
}

impl From<FusionOpt> for Fusion {
    fn from(f: FusionOpt) -> Self {
        match f {
            FusionOpt::Early => Fusion::Early,
            FusionOpt::Late => Fusion::Late,
        }
    }
}

/// Serializable mirror of [`EncoderMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderOpt {
    Cosine,
    Fourier,
}

impl From<EncoderOpt> for EncoderMode {
    fn from(e: EncoderOpt) -> Self {
        match e {
            EncoderOpt::Cosine => EncoderMode::Cosine,
            EncoderOpt::Fourier => EncoderMode::Fourier,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            dim: 64,
            intervals: 300,
            lr: 0.001,
            epochs: 20,
            eta: 2.0,
            w1: 1.0,
            w2: 10.0,
            alpha: 0.5,
            k: 1,
            sample_ratio: 0.2,
            layers: 1,
            fusion: FusionOpt::Late,
            encoder: EncoderOpt::Cosine,
            curvature: CurvatureMode::Evolve,
            no_reweigh: false,
            no_cocon: false,
            no_kernel: false,
            negatives: 16,
            seed: 0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.encoder == EncoderOpt::Fourier && self.dim % 2 != 0 {
            return fail("fourier encoder requires an even dim");
        }
        if self.intervals == 0 {
            return fail("intervals must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return fail("eta must be non-negative");
        }
        if !(self.w1 >= 0.0 && self.w1.is_finite()) || !(self.w2 >= 0.0 && self.w2.is_finite()) {
            return fail("w1 and w2 must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must lie in [0, 1]");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return fail("sample-ratio must lie in (0, 1]");
        }
        if self.layers == 0 {
            return fail("layers must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        Ok(())
    }

    /// Effective output directory.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os("STEREOGRAPH_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}
