//! Decoder: pyramid aggregation, multi-scale context extraction with a
//! single selective scan, and the fusion head that emits per-pixel logits.
//!
//! The three coarsest pyramid levels are each reduced to a common width,
//! brought to stride 8, and merged into one map `F`. The context module then
//! builds stride-16 and stride-32 regional aggregates of `F`, packs all
//! three scales to stride 32 losslessly via pixel unshuffle, scans the
//! packed stack in one pass, and returns an enriched map `F'` at stride 8.
//! The head adds `F'` back onto each level, appends a pooled global
//! descriptor, and maps the bundle to class logits at full resolution.

use crate::error::{Error, Result};
use crate::init::Rng;
use crate::model::config::ModelConfig;
use crate::model::encoder::FeaturePyramid;
use crate::nn::{
    bilinear_resize, global_avg_pool, pixel_unshuffle, BatchNorm2d, Conv2d, Params, Slot,
};
use crate::real::Real;
use crate::ssm::Ss2dBlock;
use crate::tensor::{concat_channels, Tensor};

/// Convolution, batch norm, ReLU — the decoder's reduction unit. The
/// convolution carries no bias; the norm's shift covers it.
pub struct ConvBnRelu<T: Real> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Real> ConvBnRelu<T> {
    pub fn new(rng: &mut Rng, c_in: usize, c_out: usize, k: usize) -> Result<ConvBnRelu<T>> {
        Ok(ConvBnRelu {
            conv: Conv2d::new(rng, c_in, c_out, k, 1, k / 2, 1, false)?,
            bn: BatchNorm2d::new(c_out),
        })
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        self.bn.forward(&self.conv.forward(x)?, training)?.relu()
    }
}

impl<T: Real> Params<T> for ConvBnRelu<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
    }
}

/// Reduces F2/F3/F4 to the decoder width, lifts them to stride 8, and fuses
/// them into one map.
pub struct Aggregator<T: Real> {
    reduce2: ConvBnRelu<T>,
    reduce3: ConvBnRelu<T>,
    reduce4: ConvBnRelu<T>,
    merge: ConvBnRelu<T>,
}

/// The aggregation products: the fused map plus the three per-level maps the
/// fusion head reuses, all at stride 8 with `decoder_width` channels.
pub struct Aggregate<T: Real> {
    pub fused: Tensor<T>,
    pub level2: Tensor<T>,
    pub level3: Tensor<T>,
    pub level4: Tensor<T>,
}

impl<T: Real> Aggregator<T> {
    pub fn new(rng: &mut Rng, cfg: &ModelConfig) -> Result<Aggregator<T>> {
        let c = cfg.decoder_width;
        Ok(Aggregator {
            reduce2: ConvBnRelu::new(rng, cfg.stage_channels[1], c, 1)?,
            reduce3: ConvBnRelu::new(rng, cfg.stage_channels[2], c, 1)?,
            reduce4: ConvBnRelu::new(rng, cfg.stage_channels[3], c, 1)?,
            merge: ConvBnRelu::new(rng, 3 * c, c, 1)?,
        })
    }

    pub fn forward(&self, p: &FeaturePyramid<T>, training: bool) -> Result<Aggregate<T>> {
        let (_, _, h8, w8) = p.f2.dims4("pyramid level 2")?;
        let level2 = self.reduce2.forward(&p.f2, training)?;
        let level3 = bilinear_resize(&self.reduce3.forward(&p.f3, training)?, h8, w8)?;
        let level4 = bilinear_resize(&self.reduce4.forward(&p.f4, training)?, h8, w8)?;
        let stack = concat_channels(&[&level2, &level3, &level4])?;
        let fused = self.merge.forward(&stack, training)?;
        Ok(Aggregate {
            fused,
            level2,
            level3,
            level4,
        })
    }
}

impl<T: Real> Params<T> for Aggregator<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.reduce2.visit(&format!("{prefix}.reduce2"), f);
        self.reduce3.visit(&format!("{prefix}.reduce3"), f);
        self.reduce4.visit(&format!("{prefix}.reduce4"), f);
        self.merge.visit(&format!("{prefix}.merge"), f);
    }
}

/// Multi-scale context extraction over the fused map.
///
/// Regional aggregates at strides 2 and 4 come from a 3x3/stride-2 and a
/// 5x5/stride-4 convolution. Pixel unshuffle packs the full map (factor 4)
/// and the stride-2 map (factor 2) down to the stride-4 grid without
/// discarding anything; each of the three maps is projected to the decoder
/// width, and their concatenation is scanned jointly in a single pass, so
/// every scan step sees all three scales of the same neighborhood.
pub struct MultiScaleContext<T: Real> {
    down2: Conv2d<T>,
    down4: Conv2d<T>,
    proj_full: Conv2d<T>,
    proj_half: Conv2d<T>,
    proj_quarter: Conv2d<T>,
    scan: Option<Ss2dBlock<T>>,
    mix: Conv2d<T>,
    out: Conv2d<T>,
}

impl<T: Real> MultiScaleContext<T> {
    pub fn new(rng: &mut Rng, cfg: &ModelConfig) -> Result<MultiScaleContext<T>> {
        let c = cfg.decoder_width;
        Ok(MultiScaleContext {
            down2: Conv2d::new(rng, c, c, 3, 2, 1, 1, true)?,
            down4: Conv2d::new(rng, c, c, 5, 4, 2, 1, true)?,
            proj_full: Conv2d::new(rng, 16 * c, c, 1, 1, 0, 1, true)?,
            proj_half: Conv2d::new(rng, 4 * c, c, 1, 1, 0, 1, true)?,
            proj_quarter: Conv2d::new(rng, c, c, 1, 1, 0, 1, true)?,
            scan: cfg
                .decoder_scan
                .then(|| Ss2dBlock::new(rng, 3 * c, cfg.ssm_expansion, cfg.ssm_state, cfg.ssm_gate))
                .transpose()?,
            mix: Conv2d::new(rng, 3 * c, 3 * c, 1, 1, 0, 1, true)?,
            out: Conv2d::new(rng, 3 * c, c, 1, 1, 0, 1, true)?,
        })
    }

    pub fn forward(&self, fused: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = fused.dims4("context input")?;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape(format!(
                "context input {h}x{w} must be divisible by 4"
            )));
        }
        let half = self.down2.forward(fused)?;
        let quarter = self.down4.forward(fused)?;
        let packed_full = self.proj_full.forward(&pixel_unshuffle(fused, 4)?)?;
        let packed_half = self.proj_half.forward(&pixel_unshuffle(&half, 2)?)?;
        let packed_quarter = self.proj_quarter.forward(&quarter)?;
        let stack = concat_channels(&[&packed_full, &packed_half, &packed_quarter])?;
        let scanned = match &self.scan {
            Some(scan) => scan.forward(&stack)?,
            None => stack,
        };
        let mixed = self.mix.forward(&scanned)?;
        self.out.forward(&bilinear_resize(&mixed, h, w)?)
    }
}

impl<T: Real> Params<T> for MultiScaleContext<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.down2.visit(&format!("{prefix}.down2"), f);
        self.down4.visit(&format!("{prefix}.down4"), f);
        self.proj_full.visit(&format!("{prefix}.proj_full"), f);
        self.proj_half.visit(&format!("{prefix}.proj_half"), f);
        self.proj_quarter.visit(&format!("{prefix}.proj_quarter"), f);
        if let Some(scan) = self.scan.as_mut() {
            scan.visit(&format!("{prefix}.scan"), f);
        }
        self.mix.visit(&format!("{prefix}.mix"), f);
        self.out.visit(&format!("{prefix}.out"), f);
    }
}

/// Final classification head.
///
/// Adds the context map onto each aggregated level, appends the context map
/// itself and a broadcast global average of the coarsest level, and sends
/// the five-way bundle through a two-layer 1x1-convolution MLP, then
/// upsamples the logits to the requested resolution.
pub struct FusionHead<T: Real> {
    mlp1: Conv2d<T>,
    mlp2: Conv2d<T>,
}

impl<T: Real> FusionHead<T> {
    pub fn new(rng: &mut Rng, cfg: &ModelConfig) -> Result<FusionHead<T>> {
        let c = cfg.decoder_width;
        Ok(FusionHead {
            mlp1: Conv2d::new(rng, 5 * c, c, 1, 1, 0, 1, true)?,
            mlp2: Conv2d::new(rng, c, cfg.num_classes, 1, 1, 0, 1, true)?,
        })
    }

    pub fn forward(
        &self,
        context: &Tensor<T>,
        agg: &Aggregate<T>,
        out_h: usize,
        out_w: usize,
    ) -> Result<Tensor<T>> {
        let (_, _, h8, w8) = context.dims4("fusion input")?;
        let enhanced2 = context.add(&agg.level2)?;
        let enhanced3 = context.add(&agg.level3)?;
        let enhanced4 = context.add(&agg.level4)?;
        let pooled = global_avg_pool(&agg.level4)?.broadcast_hw(h8, w8)?;
        let bundle = concat_channels(&[&enhanced2, &enhanced3, &enhanced4, context, &pooled])?;
        let hidden = self.mlp1.forward(&bundle)?.gelu()?;
        bilinear_resize(&self.mlp2.forward(&hidden)?, out_h, out_w)
    }
}

impl<T: Real> Params<T> for FusionHead<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.mlp1.visit(&format!("{prefix}.mlp1"), f);
        self.mlp2.visit(&format!("{prefix}.mlp2"), f);
    }
}

/// The full decoder pipeline.
pub struct Decoder<T: Real> {
    pub aggregator: Aggregator<T>,
    pub context: MultiScaleContext<T>,
    pub head: FusionHead<T>,
}

impl<T: Real> Decoder<T> {
    pub fn new(rng: &mut Rng, cfg: &ModelConfig) -> Result<Decoder<T>> {
        Ok(Decoder {
            aggregator: Aggregator::new(rng, cfg)?,
            context: MultiScaleContext::new(rng, cfg)?,
            head: FusionHead::new(rng, cfg)?,
        })
    }

    pub fn forward(
        &self,
        p: &FeaturePyramid<T>,
        out_h: usize,
        out_w: usize,
        training: bool,
    ) -> Result<Tensor<T>> {
        let agg = self.aggregator.forward(p, training)?;
        let context = self.context.forward(&agg.fused)?;
        self.head.forward(&context, &agg, out_h, out_w)
    }
}

impl<T: Real> Params<T> for Decoder<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.aggregator.visit(&format!("{prefix}.agg"), f);
        self.context.visit(&format!("{prefix}.context"), f);
        self.head.visit(&format!("{prefix}.head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};

    fn rand(seed: u64, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, uniform(&mut seeded(seed), n, -1.0, 1.0)).unwrap()
    }

    fn micro_pyramid(seed: u64) -> FeaturePyramid<f64> {
        FeaturePyramid {
            f1: rand(seed, &[1, 8, 16, 16]),
            f2: rand(seed + 1, &[1, 16, 8, 8]),
            f3: rand(seed + 2, &[1, 24, 4, 4]),
            f4: rand(seed + 3, &[1, 32, 2, 2]),
        }
    }

    #[test]
    fn aggregate_sits_at_stride_8_and_is_nonnegative() {
        let cfg = ModelConfig::micro(2);
        let agg = Aggregator::<f64>::new(&mut seeded(0), &cfg).unwrap();
        let out = agg.forward(&micro_pyramid(10), false).unwrap();
        assert_eq!(out.fused.shape(), [1, 32, 8, 8]);
        assert_eq!(out.level3.shape(), [1, 32, 8, 8]);
        assert_eq!(out.level4.shape(), [1, 32, 8, 8]);
        assert!(out.fused.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zeroed_aggregator_collapses_to_the_shifted_norm_floor() {
        let cfg = ModelConfig::micro(2);
        let mut agg = Aggregator::<f64>::new(&mut seeded(1), &cfg).unwrap();
        for m in [
            &mut agg.reduce2,
            &mut agg.reduce3,
            &mut agg.reduce4,
            &mut agg.merge,
        ] {
            m.conv.weight = Tensor::zeros(m.conv.weight.shape());
        }
        let shift: Vec<f64> = (0..32).map(|i| i as f64 - 16.0).collect();
        agg.merge.bn.beta = Tensor::from_vec(&[32], shift.clone()).unwrap();
        let out = agg.forward(&micro_pyramid(20), false).unwrap();
        for (ch, want) in shift.iter().enumerate() {
            let want = want.max(0.0);
            for s in 0..64 {
                assert_eq!(out.fused.data()[ch * 64 + s], want);
            }
        }
    }

    #[test]
    fn context_module_keeps_shape_and_packs_losslessly() {
        let mut cfg = ModelConfig::micro(2);
        cfg.decoder_width = 16;
        let ctx = MultiScaleContext::<f64>::new(&mut seeded(2), &cfg).unwrap();
        // 16x16 map: packs to 4x4 with 3*16 = 48 channels for the scan.
        assert_eq!(ctx.scan.as_ref().unwrap().channels(), 48);
        let f = rand(30, &[1, 16, 16, 16]);
        let out = ctx.forward(&f).unwrap();
        assert_eq!(out.shape(), [1, 16, 16, 16]);
        // Stride-8 maps not divisible by 4 cannot pack.
        assert!(ctx.forward(&rand(31, &[1, 16, 6, 6])).is_err());
    }

    #[test]
    fn zero_weight_context_propagates_only_the_output_bias() {
        let cfg = ModelConfig::micro(2);
        let mut ctx = MultiScaleContext::<f64>::new(&mut seeded(3), &cfg).unwrap();
        for conv in [
            &mut ctx.down2,
            &mut ctx.down4,
            &mut ctx.proj_full,
            &mut ctx.proj_half,
            &mut ctx.proj_quarter,
            &mut ctx.mix,
            &mut ctx.out,
        ] {
            conv.weight = Tensor::zeros(conv.weight.shape());
        }
        ctx.out.bias = Some(Tensor::full(&[32], 0.7));
        let out = ctx.forward(&rand(40, &[1, 32, 8, 8])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn head_emits_full_resolution_logits_with_unit_softmax_rows() {
        let cfg = ModelConfig::micro(3);
        let head = FusionHead::<f64>::new(&mut seeded(4), &cfg).unwrap();
        let agg = Aggregate {
            fused: rand(50, &[1, 32, 8, 8]),
            level2: rand(51, &[1, 32, 8, 8]),
            level3: rand(52, &[1, 32, 8, 8]),
            level4: rand(53, &[1, 32, 8, 8]),
        };
        let context = rand(54, &[1, 32, 8, 8]);
        let logits = head.forward(&context, &agg, 64, 64).unwrap();
        assert_eq!(logits.shape(), [1, 3, 64, 64]);
        let probs = logits.softmax(1).unwrap();
        for s in 0..64 * 64 {
            let total: f64 = (0..3).map(|k| probs.data()[k * 64 * 64 + s]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_final_layer_gives_a_uniform_posterior() {
        let cfg = ModelConfig::micro(4);
        let mut head = FusionHead::<f64>::new(&mut seeded(5), &cfg).unwrap();
        head.mlp2.weight = Tensor::zeros(head.mlp2.weight.shape());
        let agg = Aggregate {
            fused: rand(60, &[1, 32, 8, 8]),
            level2: rand(61, &[1, 32, 8, 8]),
            level3: rand(62, &[1, 32, 8, 8]),
            level4: rand(63, &[1, 32, 8, 8]),
        };
        let context = rand(64, &[1, 32, 8, 8]);
        let probs = head
            .forward(&context, &agg, 16, 16)
            .unwrap()
            .softmax(1)
            .unwrap();
        assert!(probs.data().iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }
}
