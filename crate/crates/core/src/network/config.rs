use serde::{Deserialize, Serialize};

use crate::attention::WindowConfig;
use crate::losses::LossConfig;
use crate::seqcore::ConvMode;
use crate::{Error, Result};

/// Architecture, attention layout and loss settings of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_in: usize,
    pub d_model: usize,
    /// TCN blocks per stage; also the number of encoder attention blocks.
    pub n_blocks: usize,
    pub n_decoders: usize,
    pub heads: usize,
    pub kernel_size: usize,
    /// Temporal reduction of the input projection.
    pub stride: usize,
    pub temporal_dropout: f64,
    pub n_classes: usize,
    /// Hidden width of the attention MLP as a multiple of `d_model`.
    pub mlp_ratio: usize,
    /// Depthwise dilated convolution in TCN blocks instead of a full one.
    pub tcn_depthwise: bool,
    pub window: WindowConfig,
    /// Average segment length used to pick the number of scales.
    pub s_avg: usize,
    /// One-sided window, in pooled steps, of every hierarchical scale.
    pub hta_window: usize,
    pub hta_max_scales: usize,
    pub learnable_scale_weights: bool,
    pub layer_norm_eps: f64,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_in: 2048,
            d_model: 256,
            n_blocks: 10,
            n_decoders: 3,
            heads: 8,
            kernel_size: 3,
            stride: 1,
            temporal_dropout: 0.3,
            n_classes: 8,
            mlp_ratio: 2,
            tcn_depthwise: true,
            window: WindowConfig::default(),
            s_avg: 64,
            hta_window: 16,
            hta_max_scales: 8,
            learnable_scale_weights: false,
            layer_norm_eps: 1e-5,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("n_blocks", self.n_blocks),
            ("heads", self.heads),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("n_classes", self.n_classes),
            ("mlp_ratio", self.mlp_ratio),
            ("s_avg", self.s_avg),
            ("hta_window", self.hta_window),
            ("hta_max_scales", self.hta_max_scales),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !self.heads.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "heads must be even to split window groups, got {}",
                self.heads
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.temporal_dropout) {
            return Err(Error::Config(format!(
                "temporal_dropout {} outside [0, 1)",
                self.temporal_dropout
            )));
        }
        if self.hta_max_scales > crate::attention::MAX_SCALES {
            return Err(Error::Config(format!(
                "hta_max_scales {} exceeds {}",
                self.hta_max_scales,
                crate::attention::MAX_SCALES
            )));
        }
        if self.window.w_min == 0 || self.window.w_min > self.window.w_max {
            return Err(Error::Config(format!(
                "window bounds {}..{} are not ordered",
                self.window.w_min, self.window.w_max
            )));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        self.loss.validate()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// `ceil(T / stride)`.
    pub fn reduced_len(&self, t: usize) -> usize {
        t.div_ceil(self.stride)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One-sided receptive field, in frames, of `n_blocks` stacked blocks with
/// kernel `k` and dilations `1, 2, 4, …`.
pub fn receptive_field(n_blocks: usize, k: usize, mode: ConvMode) -> usize {
    let reach_per_unit = match mode {
        ConvMode::Causal => k.saturating_sub(1),
        ConvMode::Acausal => k.saturating_sub(1) / 2,
    };
    reach_per_unit * ((1usize << n_blocks) - 1)
}
