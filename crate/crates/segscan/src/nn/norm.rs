//! Batch normalization over NCHW feature maps.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::{ensure_finite, Tensor};

/// Per-channel batch normalization with running statistics.
///
/// Training mode normalizes with the biased variance of the current batch
/// and folds the batch statistics into the running buffers by `momentum`;
/// eval mode normalizes with the running buffers only. The buffers live
/// behind `RefCell` so a whole forward pass can take `&self`.
pub struct BatchNorm2d<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    running_mean: RefCell<Tensor<T>>,
    running_var: RefCell<Tensor<T>>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> BatchNorm2d<T> {
        BatchNorm2d {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: RefCell::new(Tensor::zeros(&[channels])),
            running_var: RefCell::new(Tensor::full(&[channels], T::one())),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let (bsz, c, h, w) = x.dims4("batch_norm input")?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batch_norm over {} channels applied to {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let m = bsz * h * w;
        let plane = h * w;
        let xd = x.data();

        // Normalization statistics: batch stats in training, buffers in eval.
        let (mean, var) = if training {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            let inv_m = T::of(1.0 / m as f64);
            for ch in 0..c {
                let mut acc = T::zero();
                for b in 0..bsz {
                    let at = (b * c + ch) * plane;
                    for s in 0..plane {
                        acc = acc + xd[at + s];
                    }
                }
                mean[ch] = acc * inv_m;
            }
            for ch in 0..c {
                let mu = mean[ch];
                let mut acc = T::zero();
                for b in 0..bsz {
                    let at = (b * c + ch) * plane;
                    for s in 0..plane {
                        let d = xd[at + s] - mu;
                        acc = acc + d * d;
                    }
                }
                var[ch] = acc * inv_m;
            }
            // Fold into the running buffers (plain data, never tracked).
            let mom = T::of(self.momentum);
            let keep = T::of(1.0 - self.momentum);
            {
                let mut rm = self.running_mean.borrow_mut();
                let mut rv = self.running_var.borrow_mut();
                let new_m: Vec<T> = rm
                    .data()
                    .iter()
                    .zip(&mean)
                    .map(|(&r, &b)| keep * r + mom * b)
                    .collect();
                let new_v: Vec<T> = rv
                    .data()
                    .iter()
                    .zip(&var)
                    .map(|(&r, &b)| keep * r + mom * b)
                    .collect();
                rm.set_data(new_m)?;
                rv.set_data(new_v)?;
            }
            (mean, var)
        } else {
            (
                self.running_mean.borrow().data().to_vec(),
                self.running_var.borrow().data().to_vec(),
            )
        };

        let eps = T::of(self.eps);
        let ivar: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gd = self.gamma.data();
        let bd = self.beta.data();
        let mut y = vec![T::zero(); xd.len()];
        for b in 0..bsz {
            for ch in 0..c {
                let at = (b * c + ch) * plane;
                let g = gd[ch];
                let bt = bd[ch];
                let mu = mean[ch];
                let iv = ivar[ch];
                for s in 0..plane {
                    y[at + s] = g * (xd[at + s] - mu) * iv + bt;
                }
            }
        }
        ensure_finite("batch_norm", &y)?;
        let out = Tensor::plain(x.shape().to_vec(), y);

        let xrc = x.data_rc();
        let grc = self.gamma.data_rc();
        let needs = [
            x.requires_grad(),
            self.gamma.requires_grad(),
            self.beta.requires_grad(),
        ];
        Tensor::record(out, &[x, &self.gamma, &self.beta], move |dy| {
            let mut gg = needs[1].then(|| vec![T::zero(); c]);
            let mut gb = needs[2].then(|| vec![T::zero(); c]);
            if gg.is_some() || gb.is_some() {
                for ch in 0..c {
                    let mu = mean[ch];
                    let iv = ivar[ch];
                    let mut sg = T::zero();
                    let mut sb = T::zero();
                    for b in 0..bsz {
                        let at = (b * c + ch) * plane;
                        for s in 0..plane {
                            let d = dy[at + s];
                            sg = sg + d * (xrc[at + s] - mu) * iv;
                            sb = sb + d;
                        }
                    }
                    if let Some(gg) = gg.as_mut() {
                        gg[ch] = sg;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[ch] = sb;
                    }
                }
            }
            let gx = needs[0].then(|| {
                let mut g = vec![T::zero(); xrc.len()];
                let inv_m = T::of(1.0 / m as f64);
                for ch in 0..c {
                    let mu = mean[ch];
                    let iv = ivar[ch];
                    let gamma = grc[ch];
                    if training {
                        // Batch stats carry gradient: the layer-norm formula
                        // with the reduction taken over (batch, space).
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for b in 0..bsz {
                            let at = (b * c + ch) * plane;
                            for s in 0..plane {
                                let dxh = dy[at + s] * gamma;
                                let xhat = (xrc[at + s] - mu) * iv;
                                m1 = m1 + dxh;
                                m2 = m2 + dxh * xhat;
                            }
                        }
                        m1 = m1 * inv_m;
                        m2 = m2 * inv_m;
                        for b in 0..bsz {
                            let at = (b * c + ch) * plane;
                            for s in 0..plane {
                                let dxh = dy[at + s] * gamma;
                                let xhat = (xrc[at + s] - mu) * iv;
                                g[at + s] = iv * (dxh - m1 - xhat * m2);
                            }
                        }
                    } else {
                        // Running stats are constants: plain affine map.
                        for b in 0..bsz {
                            let at = (b * c + ch) * plane;
                            for s in 0..plane {
                                g[at + s] = dy[at + s] * gamma * iv;
                            }
                        }
                    }
                }
                g
            });
            vec![gx, gg, gb]
        })
    }
}

impl<T: Real> Params<T> for BatchNorm2d<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.gamma"), Slot::Trainable(&mut self.gamma));
        f(format!("{prefix}.beta"), Slot::Trainable(&mut self.beta));
        f(
            format!("{prefix}.running_mean"),
            Slot::Buffer(&self.running_mean),
        );
        f(
            format!("{prefix}.running_var"),
            Slot::Buffer(&self.running_var),
        );
    }
}

/// Affine layer normalization over the channel axis — the pre-norm used by
/// the mixer blocks. Stateless apart from its scale and shift.
pub struct LayerNorm<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: f64,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(channels: usize) -> LayerNorm<T> {
        LayerNorm {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(&self.gamma, &self.beta, self.eps)
    }
}

impl<T: Real> Params<T> for LayerNorm<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.gamma"), Slot::Trainable(&mut self.gamma));
        f(format!("{prefix}.beta"), Slot::Trainable(&mut self.beta));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, trunc_normal};
    use crate::tensor::grad_check;

    #[test]
    fn eval_with_unit_stats_is_identity() {
        let bn = BatchNorm2d::<f64>::new(3);
        let x =
            Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|i| i as f64 * 0.5).collect()).unwrap();
        let y = bn.forward(&x, false).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn training_constant_batch_collapses_to_beta() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.beta = Tensor::from_vec(&[2], vec![3.0, -1.0]).unwrap();
        let x = Tensor::from_vec(&[2, 2, 2, 2], vec![7.0; 16]).unwrap();
        let y = bn.forward(&x, true).unwrap();
        for ch in 0..2 {
            let want = bn.beta.data()[ch];
            for b in 0..2 {
                for s in 0..4 {
                    assert!((y.data()[(b * 2 + ch) * 4 + s] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn training_plus_minus_one_with_gamma_two() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.gamma = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        bn.eps = 1e-12;
        let x = Tensor::from_vec(&[2, 1, 1, 1], vec![-1.0, 1.0]).unwrap();
        let y = bn.forward(&x, true).unwrap();
        assert!((y.data()[0] + 2.0).abs() < 1e-6);
        assert!((y.data()[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let bn = BatchNorm2d::<f64>::new(1);
        let x = Tensor::from_vec(&[1, 1, 1, 4], vec![10.0, 10.0, 10.0, 10.0]).unwrap();
        bn.forward(&x, true).unwrap();
        // mean: 0.9*0 + 0.1*10 = 1; var: 0.9*1 + 0.1*0 = 0.9
        assert!((bn.running_mean.borrow().data()[0] - 1.0).abs() < 1e-12);
        assert!((bn.running_var.borrow().data()[0] - 0.9).abs() < 1e-12);
        // Eval mode then uses exactly those buffers.
        let y = bn.forward(&x, false).unwrap();
        let want = (10.0 - 1.0) / (0.9f64 + 1e-5).sqrt();
        assert!((y.data()[0] - want).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences_in_both_modes() {
        let mut rng = seeded(9);
        let x = Tensor::from_vec(&[2, 3, 2, 2], trunc_normal::<f64>(&mut rng, 24, 1.0)).unwrap();
        let g = Tensor::from_vec(&[3], vec![1.1, 0.9, -0.7]).unwrap();
        let b = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let probe =
            Tensor::from_vec(&[2, 3, 2, 2], trunc_normal::<f64>(&mut rng, 24, 1.0)).unwrap();
        for training in [true, false] {
            let probe = probe.clone();
            let err = grad_check(
                |xs| {
                    let mut bn = BatchNorm2d::<f64>::new(3);
                    bn.gamma = xs[1].clone();
                    bn.beta = xs[2].clone();
                    bn.forward(&xs[0], training)?.mul(&probe)?.sum()
                },
                &[x.clone(), g.clone(), b.clone()],
            )
            .unwrap();
            assert!(err < 1e-6, "bn grad err {err} (training={training})");
        }
    }
}
