//! Closed-form compute and parameter accounting.
//!
//! Every multiply-accumulate counts as one FLOP, the same convention the
//! windowed-attention and scan terms use; a mul+add=2 convention would
//! simply double every number. Elementwise work (norms, activations,
//! residual adds) is omitted as is customary for these estimates.

use crate::error::{Error, Result};
use crate::init::seeded;
use crate::model::config::{MixerKind, ModelConfig};
use crate::model::encoder::Encoder;
use crate::model::net::SegModel;
use crate::nn::{parameter_count, Ffn};
use crate::ssm::dt_rank_for;

/// Itemized FLOP estimate: `(term name, count)` pairs plus their total.
#[derive(Debug, Clone, Default)]
pub struct FlopsModel {
    terms: Vec<(String, u64)>,
}

impl FlopsModel {
    fn add(&mut self, name: impl Into<String>, count: u64) {
        self.terms.push((name.into(), count));
    }

    pub fn terms(&self) -> &[(String, u64)] {
        &self.terms
    }

    pub fn total(&self) -> u64 {
        self.terms.iter().map(|(_, c)| c).sum()
    }
}

/// Windowed attention over `L` tokens of width `D` with a `K x K` window:
/// `3LD^2` for the query/key/value projections plus `LDK^2` each for logits
/// and the value mix.
pub fn natten_flops(l: u64, d: u64, k: u64) -> u64 {
    3 * l * d * d + 2 * l * d * k * k
}

/// Full attention is the windowed formula with the window grown to the whole
/// map (`K^2 = L`), turning the linear term quadratic.
pub fn global_attention_flops(l: u64, d: u64) -> u64 {
    3 * l * d * d + 2 * l * l * d
}

/// Four directional selective scans over `L` tokens, `D` channels, state
/// width `N`: `3LDN` for the recurrence plus `LDN` for the readout, per
/// direction.
pub fn scan_flops(l: u64, d: u64, n: u64) -> u64 {
    4 * (3 * l * d * n + l * d * n)
}

/// One convolution at one MAC per weight-pixel product.
fn conv_flops(c_out: u64, c_in_per_group: u64, k: u64, out_pixels: u64) -> u64 {
    c_out * c_in_per_group * k * k * out_pixels
}

/// FLOPs of one scan block (projections plus the directional scan core).
fn ss2d_flops(l: u64, d: u64, expand: u64, n: u64, gated: bool) -> u64 {
    let inner = expand * d;
    let rank = dt_rank_for(inner as usize) as u64;
    let in_proj = if gated { 2 * inner } else { inner } * d * l;
    let dwconv = inner * 9 * l;
    let x_proj = 4 * (rank + 2 * n) * inner * l;
    let dt_proj = 4 * inner * rank * l;
    let out_proj = d * inner * l;
    in_proj + dwconv + x_proj + dt_proj + out_proj + scan_flops(l, inner, n)
}

/// Analytic per-sample FLOPs of the encoder at the given input size,
/// itemized by stage and operation. `H` and `W` must be divisible by 32.
pub fn count_flops(cfg: &ModelConfig, h: usize, w: usize) -> Result<FlopsModel> {
    cfg.validate()?;
    if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
        return Err(Error::config(format!(
            "accounting input {h}x{w} must be divisible by 32"
        )));
    }
    let mut model = FlopsModel::default();
    let (h, w) = (h as u64, w as u64);
    let n = cfg.ssm_state as u64;
    let e = cfg.ssm_expansion as u64;

    let c1 = cfg.stage_channels[0] as u64;
    let mid = (c1 / 2).max(4);
    model.add("stem.conv1", conv_flops(mid, 3, 3, (h / 2) * (w / 2)));
    model.add("stem.conv2", conv_flops(c1, mid, 3, (h / 4) * (w / 4)));

    for stage in 0..4 {
        let c = cfg.stage_channels[stage] as u64;
        let blocks = cfg.stage_blocks[stage] as u64;
        let (sh, sw) = (h / (4 << stage), w / (4 << stage));
        let l = sh * sw;
        let tag = format!("stage{}", stage + 1);
        if stage > 0 {
            let prev = cfg.stage_channels[stage - 1] as u64;
            model.add(format!("down{}", stage + 1), conv_flops(c, prev, 3, l));
        }
        if cfg.mixer != MixerKind::Ss2dOnly {
            let k = (cfg.window_sizes[stage] as u64).min(2 * sh.min(sw) - 1);
            model.add(format!("{tag}.natten"), blocks * natten_flops(l, c, k));
        }
        if cfg.mixer != MixerKind::NattenOnly {
            if stage == 3 {
                model.add(format!("{tag}.global"), blocks * global_attention_flops(l, c));
            } else {
                model.add(
                    format!("{tag}.ss2d"),
                    blocks * ss2d_flops(l, c, e, n, cfg.ssm_gate),
                );
            }
        }
        model.add(format!("{tag}.fuse"), blocks * conv_flops(c, c, 1, l));
        let hidden = Ffn::<f32>::hidden_width(c as usize, cfg.ffn_ratio) as u64;
        model.add(format!("{tag}.ffn"), blocks * 2 * hidden * c * l);
    }
    Ok(model)
}

/// Exact learnable-scalar count of the encoder alone (running statistics
/// excluded — they are buffers, not parameters).
pub fn count_encoder_params(cfg: &ModelConfig) -> Result<usize> {
    cfg.validate()?;
    let mut enc = Encoder::<f32>::new(&mut seeded(0), cfg)?;
    Ok(parameter_count(&mut enc))
}

/// Exact learnable-scalar count of the full model.
pub fn count_model_params(cfg: &ModelConfig) -> Result<usize> {
    let mut model = SegModel::<f32>::new(&mut seeded(0), cfg)?;
    Ok(parameter_count(&mut model))
}
