//! Network configuration: stage widths, depths, windows, mixer variant, and
//! named presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which spatial mixer the encoder blocks run.
///
/// The default composes neighborhood attention serially with a four-direction
/// selective scan (global attention replaces the scan in the last stage). The
/// other two variants switch one half off and exist for receptive-field and
/// cost comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixerKind {
    /// Windowed attention followed by the 2D selective scan (full block).
    NattenSs2d,
    /// Windowed attention alone; no scan, no last-stage global attention.
    NattenOnly,
    /// Scan alone (global attention in the last stage); no windowed attention.
    Ss2dOnly,
}

fn default_mixer() -> MixerKind {
    MixerKind::NattenSs2d
}
fn default_ssm_state() -> usize {
    1
}
fn default_ssm_expansion() -> usize {
    1
}
fn default_ffn_ratio() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}

/// Complete architectural description of a model.
///
/// Serializes to flat JSON; unknown keys are rejected so a typo in a config
/// file fails loudly instead of silently running the default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel width of each encoder stage, strides 4/8/16/32.
    pub stage_channels: [usize; 4],
    /// Mixer-block count per stage.
    pub stage_blocks: [usize; 4],
    /// Attention window per stage; must be odd.
    pub window_sizes: [usize; 4],
    /// State dimension N of every selective scan.
    #[serde(default = "default_ssm_state")]
    pub ssm_state: usize,
    /// Inner-width multiplier E of the scan blocks.
    #[serde(default = "default_ssm_expansion")]
    pub ssm_expansion: usize,
    /// FFN hidden width as a multiple of the block width.
    #[serde(default = "default_ffn_ratio")]
    pub ffn_ratio: f64,
    /// Channel width the decoder reduces every pyramid level to.
    pub decoder_width: usize,
    /// Number of output classes.
    pub num_classes: usize,
    /// Spatial-mixer variant (see [`MixerKind`]).
    #[serde(default = "default_mixer")]
    pub mixer: MixerKind,
    /// Multiplicative SiLU gate branch inside each scan block.
    #[serde(default = "default_true")]
    pub ssm_gate: bool,
    /// Selective scan inside the decoder's context module; when off the
    /// packed multi-scale map goes straight to the mixing convolution.
    #[serde(default = "default_true")]
    pub decoder_scan: bool,
}

impl ModelConfig {
    /// Test-sized preset: narrow, one block per stage, tiny windows.
    pub fn micro(num_classes: usize) -> ModelConfig {
        ModelConfig {
            stage_channels: [8, 16, 24, 32],
            stage_blocks: [1, 1, 1, 1],
            window_sizes: [3, 3, 3, 3],
            decoder_width: 32,
            num_classes,
            ..ModelConfig::defaults()
        }
    }

    /// Smallest deployment preset.
    pub fn tiny(num_classes: usize) -> ModelConfig {
        ModelConfig {
            stage_channels: [32, 64, 144, 192],
            stage_blocks: [2, 2, 4, 2],
            window_sizes: [11, 9, 7, 7],
            decoder_width: 128,
            num_classes,
            ..ModelConfig::defaults()
        }
    }

    /// Mid-size preset.
    pub fn small(num_classes: usize) -> ModelConfig {
        ModelConfig {
            stage_channels: [64, 144, 288, 512],
            stage_blocks: [2, 2, 10, 4],
            window_sizes: [11, 9, 7, 7],
            decoder_width: 256,
            num_classes,
            ..ModelConfig::defaults()
        }
    }

    /// Largest preset.
    pub fn base(num_classes: usize) -> ModelConfig {
        ModelConfig {
            stage_channels: [72, 144, 320, 576],
            stage_blocks: [2, 2, 22, 4],
            window_sizes: [11, 9, 7, 7],
            decoder_width: 256,
            num_classes,
            ..ModelConfig::defaults()
        }
    }

    /// Look a preset up by its lower-case name.
    pub fn preset(name: &str, num_classes: usize) -> Result<ModelConfig> {
        match name {
            "micro" => Ok(ModelConfig::micro(num_classes)),
            "tiny" => Ok(ModelConfig::tiny(num_classes)),
            "small" => Ok(ModelConfig::small(num_classes)),
            "base" => Ok(ModelConfig::base(num_classes)),
            other => Err(Error::config(format!(
                "unknown preset {other:?}; expected micro|tiny|small|base"
            ))),
        }
    }

    fn defaults() -> ModelConfig {
        ModelConfig {
            stage_channels: [0; 4],
            stage_blocks: [0; 4],
            window_sizes: [0; 4],
            ssm_state: default_ssm_state(),
            ssm_expansion: default_ssm_expansion(),
            ffn_ratio: default_ffn_ratio(),
            decoder_width: 0,
            num_classes: 0,
            mixer: default_mixer(),
            ssm_gate: true,
            decoder_scan: true,
        }
    }

    /// Check every invariant; call after deserializing.
    pub fn validate(&self) -> Result<()> {
        for (i, &c) in self.stage_channels.iter().enumerate() {
            if c == 0 {
                return Err(Error::config(format!("stage {} has zero channels", i + 1)));
            }
        }
        for (i, &n) in self.stage_blocks.iter().enumerate() {
            if n == 0 {
                return Err(Error::config(format!("stage {} has zero blocks", i + 1)));
            }
        }
        for (i, &k) in self.window_sizes.iter().enumerate() {
            if k == 0 || k % 2 == 0 {
                return Err(Error::config(format!(
                    "stage {} window {k} must be odd",
                    i + 1
                )));
            }
        }
        if self.ssm_state == 0 {
            return Err(Error::config("ssm_state must be >= 1"));
        }
        if self.ssm_expansion == 0 {
            return Err(Error::config("ssm_expansion must be >= 1"));
        }
        if !(self.ffn_ratio > 0.0) {
            return Err(Error::config(format!(
                "ffn_ratio must be positive, got {}",
                self.ffn_ratio
            )));
        }
        if self.decoder_width == 0 {
            return Err(Error::config("decoder_width must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Parse and validate a JSON config.
    pub fn from_json(text: &str) -> Result<ModelConfig> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Head count for a given channel width: the divisor whose head dimension
/// lands closest to 32, ties broken toward fewer heads.
pub fn heads_for(channels: usize) -> usize {
    let mut best = 1;
    let mut best_err = f64::INFINITY;
    for h in 1..=channels {
        if channels % h != 0 {
            continue;
        }
        let err = (channels as f64 / h as f64 - 32.0).abs();
        if err + 1e-9 < best_err {
            best = h;
            best_err = err;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["micro", "tiny", "small", "base"] {
            ModelConfig::preset(name, 4).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("giant", 4).is_err());
    }

    #[test]
    fn head_rule_targets_dimension_32() {
        assert_eq!(heads_for(32), 1);
        assert_eq!(heads_for(64), 2);
        assert_eq!(heads_for(144), 4); // head dim 36 beats 48 and 24
        assert_eq!(heads_for(192), 6);
        for c in [8, 16, 24] {
            assert_eq!(heads_for(c), 1);
        }
    }

    #[test]
    fn json_round_trip_and_unknown_key_rejection() {
        let cfg = ModelConfig::tiny(19);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ModelConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);

        let bad = text.replacen("\"ssm_state\"", "\"ssm_stat\"", 1);
        assert!(ModelConfig::from_json(&bad).is_err());
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg = ModelConfig::micro(2);
        cfg.window_sizes[2] = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::micro(2);
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::micro(2);
        cfg.stage_blocks[0] = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn omitted_optional_fields_take_defaults() {
        let text = r#"{
            "stage_channels": [8, 16, 24, 32],
            "stage_blocks": [1, 1, 1, 1],
            "window_sizes": [3, 3, 3, 3],
            "decoder_width": 32,
            "num_classes": 2
        }"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        assert_eq!(cfg, ModelConfig::micro(2));
    }
}
