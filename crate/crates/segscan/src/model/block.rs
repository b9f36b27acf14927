//! The encoder's mixer block: windowed attention composed serially with a
//! long-range context path, then a feed-forward half.
//!
//! Layout, with pre-norm residuals:
//!
//! ```text
//! t      = LN(x)
//! front  = natten(t)                  (identity in the scan-only variant)
//! merged = front + context(front)     (context = SS2D scan, or global
//!                                      attention in the last stage; the
//!                                      shortcut keeps the local signal)
//! y1     = x + conv1x1(merged)
//! y      = y1 + FFN(LN(y1))
//! ```
//!
//! The attention window shrinks automatically on maps smaller than the
//! configured window, so one block definition serves every stage and input
//! size.

use crate::attention::{GlobalAttention, Natten};
use crate::error::Result;
use crate::init::Rng;
use crate::model::config::{heads_for, MixerKind, ModelConfig};
use crate::nn::{Conv2d, Ffn, LayerNorm, Params, Slot};
use crate::real::Real;
use crate::ssm::Ss2dBlock;
use crate::tensor::Tensor;

/// The long-range half of the mixer.
enum ContextPath<T: Real> {
    /// Four-direction selective scan (stages 1-3 of the default variant).
    Scan(Ss2dBlock<T>),
    /// Full self-attention (last stage, where the map is small).
    Global(GlobalAttention<T>),
    /// No long-range path (windowed-attention-only variant).
    Off,
}

/// One encoder block at a fixed channel width.
pub struct MixerBlock<T: Real> {
    norm1: LayerNorm<T>,
    natten: Option<Natten<T>>,
    context: ContextPath<T>,
    fuse: Conv2d<T>,
    norm2: LayerNorm<T>,
    ffn: Ffn<T>,
}

impl<T: Real> MixerBlock<T> {
    /// Builds the block for `cfg`'s given `stage` (0-based).
    pub fn new(rng: &mut Rng, cfg: &ModelConfig, stage: usize) -> Result<MixerBlock<T>> {
        let c = cfg.stage_channels[stage];
        let heads = heads_for(c);
        let natten = if cfg.mixer == MixerKind::Ss2dOnly {
            None
        } else {
            Some(Natten::new(rng, c, heads, cfg.window_sizes[stage])?)
        };
        let context = if cfg.mixer == MixerKind::NattenOnly {
            ContextPath::Off
        } else if stage == 3 {
            ContextPath::Global(GlobalAttention::new(rng, c, heads)?)
        } else {
            ContextPath::Scan(Ss2dBlock::new(
                rng,
                c,
                cfg.ssm_expansion,
                cfg.ssm_state,
                cfg.ssm_gate,
            )?)
        };
        let hidden = Ffn::<T>::hidden_width(c, cfg.ffn_ratio);
        Ok(MixerBlock {
            norm1: LayerNorm::new(c),
            natten,
            context,
            fuse: Conv2d::new(rng, c, c, 1, 1, 0, 1, true)?,
            norm2: LayerNorm::new(c),
            ffn: Ffn::new(rng, c, hidden, c)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let t = self.norm1.forward(x)?;
        let front = match &self.natten {
            Some(att) => att.forward_with_clamp(&t)?,
            None => t,
        };
        let merged = match &self.context {
            ContextPath::Scan(scan) => front.add(&scan.forward(&front)?)?,
            ContextPath::Global(att) => front.add(&att.forward(&front)?)?,
            ContextPath::Off => front,
        };
        let y1 = x.add(&self.fuse.forward(&merged)?)?;
        y1.add(&self.ffn.forward(&self.norm2.forward(&y1)?)?)
    }

}

impl<T: Real> Params<T> for MixerBlock<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        if let Some(att) = self.natten.as_mut() {
            att.visit(&format!("{prefix}.natten"), f);
        }
        match &mut self.context {
            ContextPath::Scan(scan) => scan.visit(&format!("{prefix}.ss2d"), f),
            ContextPath::Global(att) => att.visit(&format!("{prefix}.global"), f),
            ContextPath::Off => {}
        }
        self.fuse.visit(&format!("{prefix}.fuse"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
        self.ffn.visit(&format!("{prefix}.ffn"), f);
    }
}
