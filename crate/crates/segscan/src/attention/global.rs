//! Full global multi-head self-attention, used where maps are small enough
//! that quadratic cost is affordable.

use crate::error::{Error, Result};
use crate::init::{trunc_normal, Rng};
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::{ensure_finite, Tensor};

pub struct GlobalAttention<T: Real> {
    pub qkv_w: Tensor<T>,
    pub qkv_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
    pub heads: usize,
}

impl<T: Real> GlobalAttention<T> {
    pub fn new(rng: &mut Rng, c: usize, heads: usize) -> Result<GlobalAttention<T>> {
        if heads == 0 || c % heads != 0 {
            return Err(Error::config(format!(
                "{heads} heads must divide {c} channels"
            )));
        }
        Ok(GlobalAttention {
            qkv_w: Tensor::from_vec(&[3 * c, c], trunc_normal(rng, 3 * c * c, 0.02))?,
            qkv_b: Tensor::zeros(&[3 * c]),
            out_w: Tensor::from_vec(&[c, c], trunc_normal(rng, c * c, 0.02))?,
            out_b: Tensor::zeros(&[c]),
            heads,
        })
    }

    pub fn channels(&self) -> usize {
        self.out_w.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4("global attention input")?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "attention over {} channels applied to {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let qkv = x.channel_linear(&self.qkv_w, Some(&self.qkv_b))?;
        let q = qkv.slice_channels(0, c)?;
        let k = qkv.slice_channels(c, c)?;
        let v = qkv.slice_channels(2 * c, c)?;
        let att = attend_full(&q, &k, &v, self.heads)?;
        att.channel_linear(&self.out_w, Some(&self.out_b))
    }
}

impl<T: Real> Params<T> for GlobalAttention<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.qkv_w"), Slot::Trainable(&mut self.qkv_w));
        f(format!("{prefix}.qkv_b"), Slot::Trainable(&mut self.qkv_b));
        f(format!("{prefix}.out_w"), Slot::Trainable(&mut self.out_w));
        f(format!("{prefix}.out_b"), Slot::Trainable(&mut self.out_b));
    }
}

/// Scaled dot-product attention over all `H*W` tokens, per head.
pub fn attend_full<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = q.dims4("global attention q")?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::shape("attention q/k/v shapes differ"));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::shape(format!("{heads} heads over {c} channels")));
    }
    let hd = c / heads;
    let l = h * w;
    let scale = T::of(1.0 / (hd as f64).sqrt());

    let tracked = q.requires_grad() || k.requires_grad() || v.requires_grad();
    let qd = q.data_rc();
    let kd = k.data_rc();
    let vd = v.data_rc();

    let mut y = vec![T::zero(); bsz * c * l];
    let mut probs: Vec<T> = if tracked {
        vec![T::zero(); bsz * heads * l * l]
    } else {
        Vec::new()
    };
    let mut row = vec![T::zero(); l];
    for b in 0..bsz {
        for head in 0..heads {
            let ch0 = head * hd;
            for t in 0..l {
                for (s, r) in row.iter_mut().enumerate() {
                    let mut dot = T::zero();
                    for d in 0..hd {
                        let at = (b * c + ch0 + d) * l;
                        dot = dot + qd[at + t] * kd[at + s];
                    }
                    *r = scale * dot;
                }
                let mut m = row[0];
                for &x in &row[1..] {
                    m = m.max(x);
                }
                let mut z = T::zero();
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    z = z + *x;
                }
                for x in row.iter_mut() {
                    *x = *x / z;
                }
                if tracked {
                    let at = ((b * heads + head) * l + t) * l;
                    probs[at..at + l].copy_from_slice(&row);
                }
                for d in 0..hd {
                    let at = (b * c + ch0 + d) * l;
                    let mut acc = T::zero();
                    for s in 0..l {
                        acc = acc + row[s] * vd[at + s];
                    }
                    y[at + t] = acc;
                }
            }
        }
    }
    ensure_finite("global attention", &y)?;
    let out = Tensor::plain(q.shape().to_vec(), y);

    let needs = [q.requires_grad(), k.requires_grad(), v.requires_grad()];
    Tensor::record(out, &[q, k, v], move |dy| {
        let mut gq = vec![T::zero(); qd.len()];
        let mut gk = vec![T::zero(); kd.len()];
        let mut gv = vec![T::zero(); vd.len()];
        let mut dp = vec![T::zero(); l];
        for b in 0..bsz {
            for head in 0..heads {
                let ch0 = head * hd;
                for t in 0..l {
                    let p = &probs[((b * heads + head) * l + t) * l..][..l];
                    dp.iter_mut().for_each(|x| *x = T::zero());
                    for d in 0..hd {
                        let at = (b * c + ch0 + d) * l;
                        let dyv = dy[at + t];
                        for s in 0..l {
                            dp[s] = dp[s] + dyv * vd[at + s];
                            gv[at + s] = gv[at + s] + p[s] * dyv;
                        }
                    }
                    let mut inner = T::zero();
                    for s in 0..l {
                        inner = inner + p[s] * dp[s];
                    }
                    for s in 0..l {
                        let dl = p[s] * (dp[s] - inner);
                        for d in 0..hd {
                            let at = (b * c + ch0 + d) * l;
                            gq[at + t] = gq[at + t] + scale * dl * kd[at + s];
                            gk[at + s] = gk[at + s] + scale * dl * qd[at + t];
                        }
                    }
                }
            }
        }
        let pick = |flag: bool, g: Vec<T>| if flag { Some(g) } else { None };
        vec![pick(needs[0], gq), pick(needs[1], gk), pick(needs[2], gv)]
    })
}
