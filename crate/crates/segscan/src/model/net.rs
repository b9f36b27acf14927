//! The assembled segmentation network: encoder plus decoder behind one
//! forward call.

use crate::error::Result;
use crate::init::Rng;
use crate::model::config::ModelConfig;
use crate::model::decoder::Decoder;
use crate::model::encoder::Encoder;
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::Tensor;

/// Encoder, decoder, and the configuration they were built from.
pub struct SegModel<T: Real> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
}

impl<T: Real> SegModel<T> {
    pub fn new(rng: &mut Rng, cfg: &ModelConfig) -> Result<SegModel<T>> {
        cfg.validate()?;
        Ok(SegModel {
            config: cfg.clone(),
            encoder: Encoder::new(rng, cfg)?,
            decoder: Decoder::new(rng, cfg)?,
        })
    }

    /// Logits at input resolution. `H` and `W` must be divisible by 32.
    pub fn forward(&self, img: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let (_, _, h, w) = img.dims4("model input")?;
        let pyramid = self.encoder.forward(img, training)?;
        self.decoder.forward(&pyramid, h, w, training)
    }

    /// Forward for arbitrary sizes: zero-pads the image on the bottom and
    /// right up to the next multiple of 32, then crops the logits back.
    pub fn forward_padded(&self, img: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let (_, _, h, w) = img.dims4("model input")?;
        let (ph, pw) = (h.div_ceil(32) * 32, w.div_ceil(32) * 32);
        if (ph, pw) == (h, w) {
            return self.forward(img, training);
        }
        let logits = self.forward(&img.pad_hw(ph, pw)?, training)?;
        logits.crop_hw(h, w)
    }
}

impl<T: Real> Params<T> for SegModel<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        let dot = if prefix.is_empty() { "" } else { "." };
        self.encoder.visit(&format!("{prefix}{dot}encoder"), f);
        self.decoder.visit(&format!("{prefix}{dot}decoder"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};
    use crate::tensor::rel_err;

    fn rand_image(seed: u64, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(&[1, 3, h, w], uniform(&mut seeded(seed), 3 * h * w, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn produces_full_resolution_logits_deterministically() {
        let cfg = ModelConfig::micro(3);
        let model = SegModel::<f64>::new(&mut seeded(0), &cfg).unwrap();
        let img = rand_image(1, 32, 64);
        let a = model.forward(&img, false).unwrap();
        let b = model.forward(&img, false).unwrap();
        assert_eq!(a.shape(), [1, 3, 32, 64]);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn padded_forward_handles_ragged_sizes() {
        let cfg = ModelConfig::micro(2);
        let model = SegModel::<f64>::new(&mut seeded(2), &cfg).unwrap();
        let img = rand_image(3, 48, 80);
        let logits = model.forward_padded(&img, false).unwrap();
        assert_eq!(logits.shape(), [1, 2, 48, 80]);
        // Already-aligned input goes through the plain path unchanged.
        let img = rand_image(4, 32, 32);
        let a = model.forward_padded(&img, false).unwrap();
        let b = model.forward(&img, false).unwrap();
        assert!(rel_err(a.data(), b.data()) == 0.0);
    }

    #[test]
    fn gradients_reach_the_input() {
        let cfg = ModelConfig::micro(2);
        let model = SegModel::<f64>::new(&mut seeded(5), &cfg).unwrap();
        let tape = crate::tensor::Tape::new();
        let img = tape.var(&rand_image(6, 32, 32));
        let loss = model.forward(&img, false).unwrap().mean().unwrap();
        loss.backward().unwrap();
        let g = img.grad().unwrap();
        assert!(g.data().iter().all(|v| v.is_finite()));
        assert!(g.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn larger_presets_validate_without_being_built() {
        ModelConfig::small(19).validate().unwrap();
        ModelConfig::base(19).validate().unwrap();
    }
}
