use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::loss::LossConfig;
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::features::input_plane_count;
use crate::nn::{Architecture, ModelSpec};

fn default_model() -> Architecture {
    Architecture::gru4()
}
fn default_batch() -> usize {
    16
}
fn default_steps() -> usize {
    1000
}
fn default_clip_seconds() -> f64 {
    3.0
}
fn default_log_every() -> usize {
    10
}
fn default_gain() -> f64 {
    1.0
}

/// Everything that determines a training run. Read from JSON; absent
/// fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_model")]
    pub model: Architecture,
    /// Transform for the network input and the reconstruction.
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Total optimizer steps the run should reach.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_clip_seconds")]
    pub clip_seconds: f64,
    /// Other clips summed into each training clip.
    #[serde(default)]
    pub mix_k: usize,
    /// Divide mixed sums by `mix_k + 1`.
    #[serde(default)]
    pub mix_rescale: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Write the checkpoint every this many steps; 0 only at the end.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Global gain applied to the input feature.
    #[serde(default = "default_gain")]
    pub feature_gain: f64,
    /// Rescale gradients whose L2 norm exceeds this value.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("train config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return bad(format!("clip_seconds {} must be positive", self.clip_seconds));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.adam.lr));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam.eps > 0.0) {
            return bad("adam eps must be positive".into());
        }
        if !self.feature_gain.is_finite() || self.feature_gain == 0.0 {
            return bad("feature_gain must be finite and non-zero".into());
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return bad("max_grad_norm must be positive".into());
            }
        }
        self.stft.validate()?;
        self.loss.validate()
    }

    /// Model spec for clips with `ambisonic_channels` channels.
    pub fn model_spec(&self, ambisonic_channels: usize) -> Result<ModelSpec> {
        ModelSpec::new(
            self.model.clone(),
            input_plane_count(ambisonic_channels),
            self.stft.freq_bins(),
        )
    }
}
