//! Sliding-window neighborhood attention.
//!
//! Every query attends to a `K x K` window centered on it and clamped inside
//! the map (the window shifts inward at borders, so interior and border
//! queries see the same number of keys). Logits get a learned relative
//! position bias indexed by the key offset. Cost is `O(H*W*K^2)` — linear in
//! pixels for fixed `K`.

use crate::error::{Error, Result};
use crate::init::{trunc_normal, Rng};
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::{ensure_finite, Tensor};

/// Neighborhood attention layer: fused QKV projection, per-head relative
/// position bias table `[heads, 2K-1, 2K-1]`, output projection.
pub struct Natten<T: Real> {
    pub qkv_w: Tensor<T>,
    pub qkv_b: Tensor<T>,
    pub rpb: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
    pub window: usize,
    pub heads: usize,
}

impl<T: Real> Natten<T> {
    pub fn new(rng: &mut Rng, c: usize, heads: usize, window: usize) -> Result<Natten<T>> {
        if window % 2 == 0 || window == 0 {
            return Err(Error::config(format!(
                "attention window must be odd, got {window}"
            )));
        }
        if heads == 0 || c % heads != 0 {
            return Err(Error::config(format!(
                "{heads} heads must divide {c} channels"
            )));
        }
        let span = 2 * window - 1;
        Ok(Natten {
            qkv_w: Tensor::from_vec(&[3 * c, c], trunc_normal(rng, 3 * c * c, 0.02))?,
            qkv_b: Tensor::zeros(&[3 * c]),
            rpb: Tensor::zeros(&[heads, span, span]),
            out_w: Tensor::from_vec(&[c, c], trunc_normal(rng, c * c, 0.02))?,
            out_b: Tensor::zeros(&[c]),
            window,
            heads,
        })
    }

    pub fn channels(&self) -> usize {
        self.out_w.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = x.dims4("neighborhood attention input")?;
        if self.window > 2 * h.min(w) - 1 {
            return Err(Error::config(format!(
                "window {} exceeds 2*min({h},{w})-1; no valid neighborhood",
                self.window
            )));
        }
        self.attend(x, self.window)
    }

    /// Forward with the window shrunk to fit small maps: the effective window
    /// is `min(K, 2*min(H,W)-1)`, which stays odd. The bias table keeps its
    /// configured size; the kernel reads its central region.
    pub fn forward_with_clamp(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = x.dims4("neighborhood attention input")?;
        self.attend(x, self.window.min(2 * h.min(w) - 1))
    }

    fn attend(&self, x: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4("neighborhood attention input")?;
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
        let att = natten_attend(&q, &k, &v, &self.rpb, window, self.heads)?;
        att.channel_linear(&self.out_w, Some(&self.out_b))
    }
}

impl<T: Real> Params<T> for Natten<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.qkv_w"), Slot::Trainable(&mut self.qkv_w));
        f(format!("{prefix}.qkv_b"), Slot::Trainable(&mut self.qkv_b));
        f(format!("{prefix}.rpb"), Slot::Trainable(&mut self.rpb));
        f(format!("{prefix}.out_w"), Slot::Trainable(&mut self.out_w));
        f(format!("{prefix}.out_b"), Slot::Trainable(&mut self.out_b));
    }
}

/// Clamped window along one axis: `(start, len)` for a query at `i`.
fn window_span(i: usize, size: usize, k: usize) -> (usize, usize) {
    let len = k.min(size);
    let half = (k - 1) / 2;
    let hi = size - len;
    let start = i.saturating_sub(half).min(hi);
    (start, len)
}

/// The attention kernel proper, with a hand-written VJP over q, k, v, and
/// the bias table.
pub fn natten_attend<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    rpb: &Tensor<T>,
    window: usize,
    heads: usize,
) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = q.dims4("natten q")?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::shape("natten q/k/v shapes differ"));
    }
    // The bias table may be built for a wider window than the one attended
    // with (a layer clamped to a small map keeps its full table); the kernel
    // reads the central `2*window-1` band. `origin` is the table index of
    // relative offset zero.
    let span = match rpb.shape() {
        [hh, r0, r1] if *hh == heads && r0 == r1 && r0 % 2 == 1 && *r0 >= 2 * window - 1 => *r0,
        other => {
            return Err(Error::shape(format!(
                "bias table {other:?}, want [{heads},R,R] with odd R >= {}",
                2 * window - 1
            )))
        }
    };
    let origin = (span - 1) / 2;
    if heads == 0 || c % heads != 0 {
        return Err(Error::shape(format!("{heads} heads over {c} channels")));
    }
    let hd = c / heads;
    let scale = T::of(1.0 / (hd as f64).sqrt());
    let (lh, lw) = (window.min(h), window.min(w));
    let slots = lh * lw;
    let hw = h * w;

    let tracked = q.requires_grad() || k.requires_grad() || v.requires_grad() || rpb.requires_grad();
    let qd = q.data_rc();
    let kd = k.data_rc();
    let vd = v.data_rc();
    let rd = rpb.data_rc();

    let mut y = vec![T::zero(); bsz * c * hw];
    // Softmax weights per (b, head, query), kept for the reverse sweep.
    let mut probs: Vec<T> = if tracked {
        vec![T::zero(); bsz * heads * hw * slots]
    } else {
        Vec::new()
    };
    let mut logits = vec![T::zero(); slots];
    for b in 0..bsz {
        for head in 0..heads {
            let ch0 = head * hd;
            for i in 0..h {
                let (si, _) = window_span(i, h, window);
                for j in 0..w {
                    let (sj, _) = window_span(j, w, window);
                    let qidx = i * w + j;
                    // Logits: scaled dot product + relative position bias.
                    for wi in 0..lh {
                        for wj in 0..lw {
                            let (ki, kj) = (si + wi, sj + wj);
                            let mut dot = T::zero();
                            for d in 0..hd {
                                let at = (b * c + ch0 + d) * hw;
                                dot = dot + qd[at + qidx] * kd[at + ki * w + kj];
                            }
                            let bias = rd[(head * span + (ki + origin - i)) * span
                                + (kj + origin - j)];
                            logits[wi * lw + wj] = scale * dot + bias;
                        }
                    }
                    // Stable softmax over the window.
                    let mut m = logits[0];
                    for &l in &logits[1..] {
                        m = m.max(l);
                    }
                    let mut z = T::zero();
                    for l in logits.iter_mut() {
                        *l = (*l - m).exp();
                        z = z + *l;
                    }
                    for l in logits.iter_mut() {
                        *l = *l / z;
                    }
                    if tracked {
                        let at = ((b * heads + head) * hw + qidx) * slots;
                        probs[at..at + slots].copy_from_slice(&logits);
                    }
                    // Weighted sum of values.
                    for d in 0..hd {
                        let at = (b * c + ch0 + d) * hw;
                        let mut acc = T::zero();
                        for wi in 0..lh {
                            for wj in 0..lw {
                                acc = acc
                                    + logits[wi * lw + wj] * vd[at + (si + wi) * w + (sj + wj)];
                            }
                        }
                        y[at + qidx] = acc;
                    }
                }
            }
        }
    }
    ensure_finite("neighborhood attention", &y)?;
    let out = Tensor::plain(q.shape().to_vec(), y);

    let needs = [
        q.requires_grad(),
        k.requires_grad(),
        v.requires_grad(),
        rpb.requires_grad(),
    ];
    Tensor::record(out, &[q, k, v, rpb], move |dy| {
        let mut gq = vec![T::zero(); qd.len()];
        let mut gk = vec![T::zero(); kd.len()];
        let mut gv = vec![T::zero(); vd.len()];
        let mut gr = vec![T::zero(); rd.len()];
        let mut dp = vec![T::zero(); slots];
        for b in 0..bsz {
            for head in 0..heads {
                let ch0 = head * hd;
                for i in 0..h {
                    let (si, _) = window_span(i, h, window);
                    for j in 0..w {
                        let (sj, _) = window_span(j, w, window);
                        let qidx = i * w + j;
                        let p = &probs[((b * heads + head) * hw + qidx) * slots..]
                            [..slots];
                        // dL/dp and dL/dv from the value mix.
                        dp.iter_mut().for_each(|x| *x = T::zero());
                        for d in 0..hd {
                            let at = (b * c + ch0 + d) * hw;
                            let dyv = dy[at + qidx];
                            for wi in 0..lh {
                                for wj in 0..lw {
                                    let kat = at + (si + wi) * w + (sj + wj);
                                    dp[wi * lw + wj] = dp[wi * lw + wj] + dyv * vd[kat];
                                    gv[kat] = gv[kat] + p[wi * lw + wj] * dyv;
                                }
                            }
                        }
                        // Softmax backward: dl = p (.) (dp - <p, dp>).
                        let mut inner = T::zero();
                        for s in 0..slots {
                            inner = inner + p[s] * dp[s];
                        }
                        for wi in 0..lh {
                            for wj in 0..lw {
                                let s = wi * lw + wj;
                                let dl = p[s] * (dp[s] - inner);
                                let (ki, kj) = (si + wi, sj + wj);
                                let rat = (head * span + (ki + origin - i)) * span
                                    + (kj + origin - j);
                                gr[rat] = gr[rat] + dl;
                                for d in 0..hd {
                                    let at = (b * c + ch0 + d) * hw;
                                    gq[at + qidx] =
                                        gq[at + qidx] + scale * dl * kd[at + ki * w + kj];
                                    gk[at + ki * w + kj] =
                                        gk[at + ki * w + kj] + scale * dl * qd[at + qidx];
                                }
                            }
                        }
                    }
                }
            }
        }
        let pick = |flag: bool, g: Vec<T>| if flag { Some(g) } else { None };
        vec![
            pick(needs[0], gq),
            pick(needs[1], gk),
            pick(needs[2], gv),
            pick(needs[3], gr),
        ]
    })
}

/// Brute-force oracle: full `HW x HW` attention with an additive `-inf` mask
/// outside each query's clamped window, plus the same bias table. Forward
/// only, built from independent code.
pub fn natten_oracle<T: Real>(x: &Tensor<T>, layer: &Natten<T>) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = x.dims4("natten oracle input")?;
    let window = layer.window;
    let heads = layer.heads;
    if window > 2 * h.min(w) - 1 {
        return Err(Error::config(format!(
            "window {window} exceeds 2*min({h},{w})-1; no valid neighborhood"
        )));
    }
    let hd = c / heads;
    let span = 2 * window - 1;
    let scale = 1.0 / (hd as f64).sqrt();
    let hw = h * w;
    let xd = x.data();
    let wq = layer.qkv_w.data();
    let bq = layer.qkv_b.data();

    // QKV per position, the slow way.
    let project = |row0: usize, b: usize, pos: usize| -> Vec<f64> {
        (0..c)
            .map(|o| {
                let mut acc = bq[row0 + o].as_f64();
                for ic in 0..c {
                    acc += wq[(row0 + o) * c + ic].as_f64() * xd[(b * c + ic) * hw + pos].as_f64();
                }
                acc
            })
            .collect()
    };

    let mut y = vec![T::zero(); bsz * c * hw];
    for b in 0..bsz {
        let q: Vec<Vec<f64>> = (0..hw).map(|p| project(0, b, p)).collect();
        let k: Vec<Vec<f64>> = (0..hw).map(|p| project(c, b, p)).collect();
        let v: Vec<Vec<f64>> = (0..hw).map(|p| project(2 * c, b, p)).collect();
        for head in 0..heads {
            let ch0 = head * hd;
            for qi in 0..h {
                let (si, li) = window_span(qi, h, window);
                for qj in 0..w {
                    let (sj, lj) = window_span(qj, w, window);
                    let qpos = qi * w + qj;
                    // Mask over ALL keys: finite logits only inside the window.
                    let mut logits = vec![f64::NEG_INFINITY; hw];
                    for ki in 0..h {
                        for kj in 0..w {
                            if ki < si || ki >= si + li || kj < sj || kj >= sj + lj {
                                continue;
                            }
                            let kpos = ki * w + kj;
                            let mut dot = 0.0;
                            for d in 0..hd {
                                dot += q[qpos][ch0 + d] * k[kpos][ch0 + d];
                            }
                            let bias = layer.rpb.data()[(head * span + (ki + window - 1 - qi))
                                * span
                                + (kj + window - 1 - qj)]
                                .as_f64();
                            logits[kpos] = scale * dot + bias;
                        }
                    }
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for d in 0..hd {
                        let mut acc = 0.0;
                        for (kpos, e) in exps.iter().enumerate() {
                            if *e > 0.0 {
                                acc += e / z * v[kpos][ch0 + d];
                            }
                        }
                        y[(b * c + ch0 + d) * hw + qpos] = T::of(acc);
                    }
                }
            }
        }
    }
    // Output projection, also the slow way.
    let att = y;
    let wo = layer.out_w.data();
    let bo = layer.out_b.data();
    let mut out = vec![T::zero(); bsz * c * hw];
    for b in 0..bsz {
        for o in 0..c {
            for pos in 0..hw {
                let mut acc = bo[o].as_f64();
                for ic in 0..c {
                    acc += wo[o * c + ic].as_f64() * att[(b * c + ic) * hw + pos].as_f64();
                }
                out[(b * c + o) * hw + pos] = T::of(acc);
            }
        }
    }
    Ok(Tensor::plain(x.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};
    use crate::tensor::{grad_check, rel_err, Tape};

    fn rand_input(seed: u64, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, uniform(&mut seeded(seed), n, -1.0, 1.0)).unwrap()
    }

    #[test]
    fn construction_rejects_even_windows_and_bad_heads() {
        assert!(matches!(
            Natten::<f32>::new(&mut seeded(1), 8, 2, 4),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Natten::<f32>::new(&mut seeded(1), 8, 3, 3),
            Err(Error::Config(_))
        ));
        assert!(Natten::<f32>::new(&mut seeded(1), 8, 2, 3).is_ok());
    }

    #[test]
    fn oversized_window_is_a_config_error() {
        let layer = Natten::<f64>::new(&mut seeded(2), 4, 1, 5).unwrap();
        // 2*min(2,6)-1 = 3 < 5.
        let x = rand_input(3, &[1, 4, 2, 6]);
        assert!(matches!(layer.forward(&x), Err(Error::Config(_))));
        // 3x3 map admits K=5 (2*3-1 = 5).
        let x = rand_input(3, &[1, 4, 3, 3]);
        assert!(layer.forward(&x).is_ok());
    }

    #[test]
    fn singleton_map_returns_projected_value() {
        let layer = Natten::<f64>::new(&mut seeded(4), 6, 2, 1).unwrap();
        let x = rand_input(5, &[1, 6, 1, 1]);
        let y = layer.forward(&x).unwrap();
        // Weight 1 on the only key: y = out(v).
        let qkv = x.channel_linear(&layer.qkv_w, Some(&layer.qkv_b)).unwrap();
        let v = qkv.slice_channels(12, 6).unwrap();
        let want = v.channel_linear(&layer.out_w, Some(&layer.out_b)).unwrap();
        assert!(rel_err(y.data(), want.data()) < 1e-12);
        // The raw kernel tolerates windows wider than the map: the clamped
        // span still holds the one key, which gets weight 1.
        let q = qkv.slice_channels(0, 6).unwrap();
        let k = qkv.slice_channels(6, 6).unwrap();
        let rpb = Tensor::from_vec(&[2, 5, 5], uniform(&mut seeded(6), 50, -1.0, 1.0)).unwrap();
        let att = natten_attend(&q, &k, &v, &rpb, 3, 2).unwrap();
        assert!(rel_err(att.data(), v.data()) < 1e-12);
    }

    #[test]
    fn constant_values_make_a_constant_map() {
        // With v identical everywhere, convexity of softmax weights makes
        // every output position out(v) regardless of q and k.
        let mut layer = Natten::<f64>::new(&mut seeded(6), 4, 2, 3).unwrap();
        let mut w = layer.qkv_w.data().to_vec();
        let mut b = layer.qkv_b.data().to_vec();
        for o in 8..12 {
            for ic in 0..4 {
                w[o * 4 + ic] = 0.0;
            }
            b[o] = (o as f64) * 0.25 - 1.0;
        }
        layer.qkv_w = Tensor::from_vec(&[12, 4], w).unwrap();
        layer.qkv_b = Tensor::from_vec(&[12], b).unwrap();
        let x = rand_input(7, &[1, 4, 5, 4]);
        let y = layer.forward(&x).unwrap();
        for ch in 0..4 {
            let plane = &y.data()[ch * 20..(ch + 1) * 20];
            for &val in plane {
                assert!((val - plane[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        for (seed, (h, w), window, heads) in [
            (10u64, (5usize, 5usize), 3usize, 2usize),
            (11, (4, 6), 3, 1),
            (12, (5, 5), 5, 4),
            (13, (3, 3), 5, 2), // window covers the whole map
            (14, (7, 4), 5, 1),
        ] {
            let mut layer = Natten::<f64>::new(&mut seeded(seed), 4, heads, window).unwrap();
            layer.rpb = Tensor::from_vec(
                &[heads, 2 * window - 1, 2 * window - 1],
                uniform(&mut seeded(seed + 1), heads * (2 * window - 1).pow(2), -0.5, 0.5),
            )
            .unwrap();
            let x = rand_input(seed + 2, &[1, 4, h, w]);
            let got = layer.forward(&x).unwrap();
            let want = natten_oracle(&x, &layer).unwrap();
            let err = rel_err(got.data(), want.data());
            assert!(err < 1e-12, "seed {seed}: err {err}");
        }
    }

    #[test]
    fn gradient_is_exactly_local() {
        // One attention layer, backward from a single output pixel: the
        // input gradient must vanish outside the clamped K x K window
        // (plus nowhere else inside it).
        let layer = Natten::<f64>::new(&mut seeded(20), 4, 2, 3).unwrap();
        let tape = Tape::new();
        let x = tape.var(&rand_input(21, &[1, 4, 7, 7]));
        let y = layer.forward(&x).unwrap();
        let (qi, qj) = (0usize, 3usize); // border row: window clamps to rows 0..2
        let mut seed = vec![0.0; y.numel()];
        seed[qi * 7 + qj] = 1.0;
        y.backward_seeded(&seed).unwrap();
        let g = x.grad().unwrap();
        for ch in 0..4 {
            for i in 0..7 {
                for j in 0..7 {
                    let inside = i <= 2 && (2..=4).contains(&j);
                    let gv = g.data()[(ch * 7 + i) * 7 + j];
                    if inside {
                        assert!(gv != 0.0, "expected support at ({i},{j})");
                    } else {
                        assert_eq!(gv, 0.0, "leak at ({i},{j}) ch {ch}");
                    }
                }
            }
        }
    }

    #[test]
    fn interior_translation_equivariance() {
        let layer = Natten::<f64>::new(&mut seeded(22), 2, 1, 3).unwrap();
        let base = rand_input(23, &[1, 2, 9, 9]);
        // Shift the input by (1, 2) with wraparound; compare interiors.
        let mut shifted = vec![0.0; base.numel()];
        for ch in 0..2 {
            for i in 0..9 {
                for j in 0..9 {
                    shifted[(ch * 9 + (i + 1) % 9) * 9 + (j + 2) % 9] =
                        base.data()[(ch * 9 + i) * 9 + j];
                }
            }
        }
        let shifted = Tensor::from_vec(&[1, 2, 9, 9], shifted).unwrap();
        let ya = layer.forward(&base).unwrap();
        let yb = layer.forward(&shifted).unwrap();
        // Queries whose windows stay interior in both frames and whose
        // support does not cross the wrap seam.
        for ch in 0..2 {
            for i in 2..7 {
                for j in 3..6 {
                    let a = ya.data()[(ch * 9 + i) * 9 + j];
                    let b = yb.data()[(ch * 9 + i + 1) * 9 + j + 2];
                    assert!((a - b).abs() < 1e-12, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn attend_gradients_match_finite_differences() {
        let q = rand_input(30, &[1, 4, 3, 4]);
        let k = rand_input(31, &[1, 4, 3, 4]);
        let v = rand_input(32, &[1, 4, 3, 4]);
        let rpb = Tensor::from_vec(&[2, 5, 5], uniform(&mut seeded(33), 50, -0.3, 0.3)).unwrap();
        let probe = rand_input(34, &[1, 4, 3, 4]);
        let err = grad_check(
            |xs| {
                natten_attend(&xs[0], &xs[1], &xs[2], &xs[3], 3, 2)?
                    .mul(&probe)?
                    .sum()
            },
            &[q, k, v, rpb],
        )
        .unwrap();
        assert!(err < 1e-7, "natten grad err {err}");
    }
}
