//! Four-stage hierarchical encoder producing a feature pyramid at strides
//! 4, 8, 16, and 32.
//!
//! A two-convolution stem takes the image straight to stride 4; each later
//! stage opens with one strided 3x3 convolution, then runs its mixer blocks
//! at constant width.

use crate::error::{Error, Result};
use crate::init::Rng;
use crate::model::block::MixerBlock;
use crate::model::config::ModelConfig;
use crate::nn::{BatchNorm2d, Conv2d, Params, Slot};
use crate::real::Real;
use crate::tensor::Tensor;

/// Multi-resolution encoder outputs. `f1..f4` sit at strides 4/8/16/32 with
/// the configured stage widths.
pub struct FeaturePyramid<T: Real> {
    pub f1: Tensor<T>,
    pub f2: Tensor<T>,
    pub f3: Tensor<T>,
    pub f4: Tensor<T>,
}

/// Stride-4 entry: two stride-2 3x3 convolutions with batch norm, a GELU
/// between them, and batch norm after the second.
struct Stem<T: Real> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
}

impl<T: Real> Stem<T> {
    fn new(rng: &mut Rng, c_out: usize) -> Result<Stem<T>> {
        let mid = (c_out / 2).max(4);
        Ok(Stem {
            conv1: Conv2d::new(rng, 3, mid, 3, 2, 1, 1, true)?,
            bn1: BatchNorm2d::new(mid),
            conv2: Conv2d::new(rng, mid, c_out, 3, 2, 1, 1, true)?,
            bn2: BatchNorm2d::new(c_out),
        })
    }

    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, training)?.gelu()?;
        self.bn2.forward(&self.conv2.forward(&h)?, training)
    }
}

impl<T: Real> Params<T> for Stem<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.bn1.visit(&format!("{prefix}.bn1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.bn2.visit(&format!("{prefix}.bn2"), f);
    }
}

/// Between-stage reduction: strided 3x3 convolution plus batch norm, no
/// activation.
struct Downsample<T: Real> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
}

impl<T: Real> Downsample<T> {
    fn new(rng: &mut Rng, c_in: usize, c_out: usize) -> Result<Downsample<T>> {
        Ok(Downsample {
            conv: Conv2d::new(rng, c_in, c_out, 3, 2, 1, 1, true)?,
            bn: BatchNorm2d::new(c_out),
        })
    }

    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        self.bn.forward(&self.conv.forward(x)?, training)
    }
}

impl<T: Real> Params<T> for Downsample<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
    }
}

/// The full encoder.
pub struct Encoder<T: Real> {
    stem: Stem<T>,
    downsamples: Vec<Downsample<T>>,
    stages: Vec<Vec<MixerBlock<T>>>,
}

impl<T: Real> Encoder<T> {
    pub fn new(rng: &mut Rng, cfg: &ModelConfig) -> Result<Encoder<T>> {
        let stem = Stem::new(rng, cfg.stage_channels[0])?;
        let mut downsamples = Vec::new();
        let mut stages = Vec::new();
        for stage in 0..4 {
            if stage > 0 {
                downsamples.push(Downsample::new(
                    rng,
                    cfg.stage_channels[stage - 1],
                    cfg.stage_channels[stage],
                )?);
            }
            let blocks = (0..cfg.stage_blocks[stage])
                .map(|_| MixerBlock::new(rng, cfg, stage))
                .collect::<Result<Vec<_>>>()?;
            stages.push(blocks);
        }
        Ok(Encoder {
            stem,
            downsamples,
            stages,
        })
    }

    /// Runs the image through all four stages. `H` and `W` must be
    /// divisible by 32 so every stride evenly divides the map.
    pub fn forward(&self, img: &Tensor<T>, training: bool) -> Result<FeaturePyramid<T>> {
        let (_, c, h, w) = img.dims4("encoder input")?;
        if c != 3 {
            return Err(Error::shape(format!(
                "encoder expects 3 input channels, got {c}"
            )));
        }
        if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "encoder input {h}x{w} must be divisible by 32"
            )));
        }
        let mut x = self.stem.forward(img, training)?;
        let mut features = Vec::with_capacity(4);
        for stage in 0..4 {
            if stage > 0 {
                x = self.downsamples[stage - 1].forward(&x, training)?;
            }
            for block in &self.stages[stage] {
                x = block.forward(&x)?;
            }
            features.push(x.clone());
        }
        let f4 = features.pop().unwrap();
        let f3 = features.pop().unwrap();
        let f2 = features.pop().unwrap();
        let f1 = features.pop().unwrap();
        Ok(FeaturePyramid { f1, f2, f3, f4 })
    }
}

impl<T: Real> Params<T> for Encoder<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        self.stem.visit(&format!("{prefix}.stem"), f);
        for (i, down) in self.downsamples.iter_mut().enumerate() {
            down.visit(&format!("{prefix}.down{}", i + 2), f);
        }
        for (i, blocks) in self.stages.iter_mut().enumerate() {
            for (j, block) in blocks.iter_mut().enumerate() {
                block.visit(&format!("{prefix}.stage{}.block{j}", i + 1), f);
            }
        }
    }
}
