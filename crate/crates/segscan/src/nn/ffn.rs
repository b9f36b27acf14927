//! Token-wise two-layer feedforward network with GELU.

use crate::error::{Error, Result};
use crate::init::{trunc_normal, Rng};
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::Tensor;

/// Two 1x1 linear maps with a GELU between them, applied per position of a
/// `[B,C,..]` tensor. Covers both the shape-preserving encoder FFN
/// (`c_out == c_in`) and the decoder's channel-mapping MLP head.
pub struct Ffn<T: Real> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Real> Ffn<T> {
    pub fn new(rng: &mut Rng, c_in: usize, hidden: usize, c_out: usize) -> Result<Ffn<T>> {
        if hidden == 0 {
            return Err(Error::config("ffn hidden width must be >= 1"));
        }
        Ok(Ffn {
            w1: Tensor::from_vec(&[hidden, c_in], trunc_normal(rng, hidden * c_in, 0.02))?,
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::from_vec(&[c_out, hidden], trunc_normal(rng, c_out * hidden, 0.02))?,
            b2: Tensor::zeros(&[c_out]),
        })
    }

    /// Hidden width from a channel count and expansion ratio: `round(ratio*c)`.
    pub fn hidden_width(c: usize, ratio: f64) -> usize {
        ((c as f64 * ratio).round() as usize).max(1)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.channel_linear(&self.w1, Some(&self.b1))?
            .gelu()?
            .channel_linear(&self.w2, Some(&self.b2))
    }
}

impl<T: Real> Params<T> for Ffn<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.w1"), Slot::Trainable(&mut self.w1));
        f(format!("{prefix}.b1"), Slot::Trainable(&mut self.b1));
        f(format!("{prefix}.w2"), Slot::Trainable(&mut self.w2));
        f(format!("{prefix}.b2"), Slot::Trainable(&mut self.b2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};
    use crate::tensor::rel_err;

    #[test]
    fn zero_weights_give_zero_output() {
        let mut ffn = Ffn::<f64>::new(&mut seeded(1), 4, 8, 4).unwrap();
        ffn.w1 = Tensor::zeros(&[8, 4]);
        ffn.w2 = Tensor::zeros(&[4, 8]);
        let x = Tensor::from_vec(&[1, 4, 3], uniform(&mut seeded(2), 12, -1.0, 1.0)).unwrap();
        let y = ffn.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_width_rounding() {
        assert_eq!(Ffn::<f32>::hidden_width(32, 4.0), 128);
        assert_eq!(Ffn::<f32>::hidden_width(3, 0.1), 1);
        assert_eq!(Ffn::<f32>::hidden_width(10, 2.5), 25);
    }

    #[test]
    fn equals_matmul_gelu_matmul_oracle() {
        let mut rng = seeded(3);
        let ffn = Ffn::<f64>::new(&mut rng, 3, 7, 5).unwrap();
        // One batch, L=4 positions: compare against [L,C] matmul chain.
        let x = Tensor::from_vec(&[1, 3, 4], uniform(&mut rng, 12, -2.0, 2.0)).unwrap();
        let y = ffn.forward(&x).unwrap();

        // Transpose x to [L,C], run x W1^T + b1, gelu, W2^T + b2, transpose back.
        let mut xt = vec![0.0f64; 12];
        for c in 0..3 {
            for l in 0..4 {
                xt[l * 3 + c] = x.data()[c * 4 + l];
            }
        }
        let xt = Tensor::from_vec(&[4, 3], xt).unwrap();
        let mut w1t = vec![0.0f64; 21];
        for o in 0..7 {
            for c in 0..3 {
                w1t[c * 7 + o] = ffn.w1.data()[o * 3 + c];
            }
        }
        let w1t = Tensor::from_vec(&[3, 7], w1t).unwrap();
        let mut w2t = vec![0.0f64; 35];
        for o in 0..5 {
            for c in 0..7 {
                w2t[c * 5 + o] = ffn.w2.data()[o * 7 + c];
            }
        }
        let w2t = Tensor::from_vec(&[7, 5], w2t).unwrap();
        let h = xt.matmul(&w1t).unwrap().gelu().unwrap();
        let o = h.matmul(&w2t).unwrap();
        let mut want = vec![0.0f64; 20];
        for l in 0..4 {
            for c in 0..5 {
                want[c * 4 + l] = o.data()[l * 5 + c] + ffn.b2.data()[c];
            }
        }
        assert!(rel_err(y.data(), &want) < 1e-12);
    }
}
