//! Differentiable tensor operations.
//!
//! Every compute op validates shapes, checks its output for non-finite
//! values, and records a VJP callback when any input is tracked. There is no
//! general broadcasting: binary ops want equal shapes, and the only widened
//! forms are scalar ops, per-channel weights inside `channel_linear`, and
//! the explicit `broadcast_hw`.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{ensure_finite, Tensor};

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `(outer, len, inner)` strides for iterating one axis of a shape.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn unary<T: Real>(
    x: &Tensor<T>,
    name: &'static str,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Result<Tensor<T>> {
    let y: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
    ensure_finite(name, &y)?;
    let out = Tensor::plain(x.shape().to_vec(), y);
    let xd = Rc::clone(&x.data);
    let yd = Rc::clone(&out.data);
    let need = x.requires_grad();
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let g = dy
            .iter()
            .zip(xd.iter().zip(yd.iter()))
            .map(|(&d, (&xi, &yi))| d * df(xi, yi))
            .collect();
        vec![Some(g)]
    })
}

fn binary<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    name: &'static str,
    f: impl Fn(T, T) -> T,
    dfa: impl Fn(T, T) -> T + 'static,
    dfb: impl Fn(T, T) -> T + 'static,
) -> Result<Tensor<T>> {
    same_shape(a, b, name)?;
    let y: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &z)| f(x, z))
        .collect();
    ensure_finite(name, &y)?;
    let out = Tensor::plain(a.shape().to_vec(), y);
    let ad = Rc::clone(&a.data);
    let bd = Rc::clone(&b.data);
    let (na, nb) = (a.requires_grad(), b.requires_grad());
    Tensor::record(out, &[a, b], move |dy| {
        let ga = na.then(|| {
            dy.iter()
                .zip(ad.iter().zip(bd.iter()))
                .map(|(&d, (&x, &z))| d * dfa(x, z))
                .collect()
        });
        let gb = nb.then(|| {
            dy.iter()
                .zip(ad.iter().zip(bd.iter()))
                .map(|(&d, (&x, &z))| d * dfb(x, z))
                .collect()
        });
        vec![ga, gb]
    })
}

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, "add", |a, b| a + b, |_, _| T::one(), |_, _| T::one())
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(
            self,
            other,
            "sub",
            |a, b| a - b,
            |_, _| T::one(),
            |_, _| -T::one(),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn add_scalar(&self, c: T) -> Result<Tensor<T>> {
        unary(self, "add_scalar", |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Result<Tensor<T>> {
        unary(self, "mul_scalar", |x| x * c, move |_, _| c)
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        unary(
            self,
            "relu",
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self) -> Result<Tensor<T>> {
        unary(
            self,
            "silu",
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// Tanh-form GELU: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&self) -> Result<Tensor<T>> {
        let a = T::of(0.797_884_560_802_865_4); // sqrt(2/pi)
        let b = T::of(0.044_715);
        let half = T::of(0.5);
        let three = T::of(3.0);
        unary(
            self,
            "gelu",
            move |x| {
                let u = a * (x + b * x * x * x);
                half * x * (T::one() + u.tanh())
            },
            move |x, _| {
                let u = a * (x + b * x * x * x);
                let t = u.tanh();
                let du = a * (T::one() + three * b * x * x);
                half * (T::one() + t) + half * x * (T::one() - t * t) * du
            },
        )
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        unary(self, "exp", |x| x.exp(), |_, y| y)
    }

    /// Numerically stable `ln(1 + e^x)`.
    pub fn softplus(&self) -> Result<Tensor<T>> {
        unary(
            self,
            "softplus",
            |x| softplus_scalar(x),
            |x, _| sigmoid(x),
        )
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Result<Tensor<T>> {
        let mut acc = T::zero();
        for &v in self.data().iter() {
            acc = acc + v;
        }
        ensure_finite("sum", &[acc])?;
        let out = Tensor::scalar(acc);
        let n = self.numel();
        let need = self.requires_grad();
        Tensor::record(out, &[self], move |dy| {
            if !need {
                return vec![None];
            }
            vec![Some(vec![dy[0]; n])]
        })
    }

    /// Mean of all elements, as a scalar tensor.
    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        let inv = T::of(1.0 / n as f64);
        self.sum()?.mul_scalar(inv)
    }

    /// Rank-2 matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = match self.shape()[..] {
            [m, k] => (m, k),
            _ => return Err(Error::shape(format!("matmul lhs rank {:?}", self.shape()))),
        };
        let (k2, n) = match other.shape()[..] {
            [k2, n] => (k2, n),
            _ => {
                return Err(Error::shape(format!(
                    "matmul rhs rank {:?}",
                    other.shape()
                )))
            }
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims {k} vs {k2} (shapes {:?} x {:?})",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.data();
        let b = other.data();
        let mut y = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                let yrow = &mut y[i * n..(i + 1) * n];
                for j in 0..n {
                    yrow[j] = yrow[j] + aip * brow[j];
                }
            }
        }
        ensure_finite("matmul", &y)?;
        let out = Tensor::plain(vec![m, n], y);
        let ad = Rc::clone(&self.data);
        let bd = Rc::clone(&other.data);
        let (na, nb) = (self.requires_grad(), other.requires_grad());
        Tensor::record(out, &[self, other], move |dy| {
            let ga = na.then(|| {
                let mut g = vec![T::zero(); m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = T::zero();
                        for j in 0..n {
                            acc = acc + dy[i * n + j] * bd[p * n + j];
                        }
                        g[i * k + p] = acc;
                    }
                }
                g
            });
            let gb = nb.then(|| {
                let mut g = vec![T::zero(); k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        for j in 0..n {
                            g[p * n + j] = g[p * n + j] + aip * dy[i * n + j];
                        }
                    }
                }
                g
            });
            vec![ga, gb]
        })
    }

    /// Softmax along `axis` with max-subtraction for stability.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::shape(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut y = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let mut m = x[idx(0)];
                for a in 1..len {
                    m = m.max(x[idx(a)]);
                }
                let mut z = T::zero();
                for a in 0..len {
                    let e = (x[idx(a)] - m).exp();
                    y[idx(a)] = e;
                    z = z + e;
                }
                for a in 0..len {
                    y[idx(a)] = y[idx(a)] / z;
                }
            }
        }
        ensure_finite("softmax", &y)?;
        let out = Tensor::plain(self.shape().to_vec(), y);
        let yd = Rc::clone(&out.data);
        let need = self.requires_grad();
        Tensor::record(out, &[self], move |dy| {
            if !need {
                return vec![None];
            }
            let mut g = vec![T::zero(); dy.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |a: usize| (o * len + a) * inner + i;
                    let mut s = T::zero();
                    for a in 0..len {
                        s = s + dy[idx(a)] * yd[idx(a)];
                    }
                    for a in 0..len {
                        g[idx(a)] = yd[idx(a)] * (dy[idx(a)] - s);
                    }
                }
            }
            vec![Some(g)]
        })
    }

    /// Layer normalization over the channel axis (axis 1) with affine
    /// weights, using the biased variance.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        if self.rank() < 2 {
            return Err(Error::shape(format!(
                "layer_norm wants rank >= 2, got {:?}",
                self.shape()
            )));
        }
        let c = self.shape()[1];
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::shape(format!(
                "layer_norm affine shapes {:?}/{:?} for {c} channels",
                gamma.shape(),
                beta.shape()
            )));
        }
        let (b_dim, _, inner) = split_axis(self.shape(), 1);
        let x = self.data();
        let g = gamma.data();
        let bt = beta.data();
        let eps = T::of(eps);
        let inv_c = T::of(1.0 / c as f64);
        let mut y = vec![T::zero(); x.len()];
        let mut means = vec![T::zero(); b_dim * inner];
        let mut ivars = vec![T::zero(); b_dim * inner];
        for b in 0..b_dim {
            for s in 0..inner {
                let idx = |ch: usize| (b * c + ch) * inner + s;
                let mut mu = T::zero();
                for ch in 0..c {
                    mu = mu + x[idx(ch)];
                }
                mu = mu * inv_c;
                let mut var = T::zero();
                for ch in 0..c {
                    let d = x[idx(ch)] - mu;
                    var = var + d * d;
                }
                var = var * inv_c;
                let ivar = T::one() / (var + eps).sqrt();
                means[b * inner + s] = mu;
                ivars[b * inner + s] = ivar;
                for ch in 0..c {
                    y[idx(ch)] = g[ch] * (x[idx(ch)] - mu) * ivar + bt[ch];
                }
            }
        }
        ensure_finite("layer_norm", &y)?;
        let out = Tensor::plain(self.shape().to_vec(), y);
        let xd = Rc::clone(&self.data);
        let gd = Rc::clone(&gamma.data);
        let needs = [
            self.requires_grad(),
            gamma.requires_grad(),
            beta.requires_grad(),
        ];
        Tensor::record(out, &[self, gamma, beta], move |dy| {
            let mut gx = needs[0].then(|| vec![T::zero(); xd.len()]);
            let mut gg = needs[1].then(|| vec![T::zero(); c]);
            let mut gb = needs[2].then(|| vec![T::zero(); c]);
            for b in 0..b_dim {
                for s in 0..inner {
                    let idx = |ch: usize| (b * c + ch) * inner + s;
                    let mu = means[b * inner + s];
                    let ivar = ivars[b * inner + s];
                    if let Some(gg) = gg.as_mut() {
                        for ch in 0..c {
                            let xhat = (xd[idx(ch)] - mu) * ivar;
                            gg[ch] = gg[ch] + dy[idx(ch)] * xhat;
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for ch in 0..c {
                            gb[ch] = gb[ch] + dy[idx(ch)];
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let mut m1 = T::zero(); // mean of dxhat
                        let mut m2 = T::zero(); // mean of dxhat * xhat
                        for ch in 0..c {
                            let xhat = (xd[idx(ch)] - mu) * ivar;
                            let dxh = dy[idx(ch)] * gd[ch];
                            m1 = m1 + dxh;
                            m2 = m2 + dxh * xhat;
                        }
                        m1 = m1 * inv_c;
                        m2 = m2 * inv_c;
                        for ch in 0..c {
                            let xhat = (xd[idx(ch)] - mu) * ivar;
                            let dxh = dy[idx(ch)] * gd[ch];
                            gx[idx(ch)] = ivar * (dxh - m1 - xhat * m2);
                        }
                    }
                }
            }
            vec![gx, gg, gb]
        })
    }

    /// Per-position linear map over the channel axis: for `x: [B,C,..]` and
    /// `w: [O,C]`, `y[b,o,s] = sum_c w[o,c] x[b,c,s] (+ bias[o])`. This is a
    /// 1x1 convolution that also works on `[B,C,L]` sequences.
    pub fn channel_linear(&self, w: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        if self.rank() < 3 {
            return Err(Error::shape(format!(
                "channel_linear wants rank >= 3, got {:?}",
                self.shape()
            )));
        }
        let c = self.shape()[1];
        let (o_dim, c2) = match w.shape()[..] {
            [o, c2] => (o, c2),
            _ => {
                return Err(Error::shape(format!(
                    "channel_linear weight rank {:?}",
                    w.shape()
                )))
            }
        };
        if c2 != c {
            return Err(Error::shape(format!(
                "channel_linear: weight {:?} vs {c} input channels",
                w.shape()
            )));
        }
        if let Some(b) = bias {
            if b.shape() != [o_dim] {
                return Err(Error::shape(format!(
                    "channel_linear bias {:?} for {o_dim} outputs",
                    b.shape()
                )));
            }
        }
        let (batch, _, s_len) = split_axis(self.shape(), 1);
        let x = self.data();
        let wd = w.data();
        let mut y = vec![T::zero(); batch * o_dim * s_len];
        for b in 0..batch {
            for o in 0..o_dim {
                let yrow = &mut y[(b * o_dim + o) * s_len..(b * o_dim + o + 1) * s_len];
                for ch in 0..c {
                    let wv = wd[o * c + ch];
                    let xrow = &x[(b * c + ch) * s_len..(b * c + ch + 1) * s_len];
                    for s in 0..s_len {
                        yrow[s] = yrow[s] + wv * xrow[s];
                    }
                }
                if let Some(bias) = bias {
                    let bv = bias.data()[o];
                    for v in yrow.iter_mut() {
                        *v = *v + bv;
                    }
                }
            }
        }
        ensure_finite("channel_linear", &y)?;
        let mut out_shape = self.shape().to_vec();
        out_shape[1] = o_dim;
        let out = Tensor::plain(out_shape, y);
        let xd = Rc::clone(&self.data);
        let wrc = Rc::clone(&w.data);
        let needs = [
            self.requires_grad(),
            w.requires_grad(),
            bias.map(|b| b.requires_grad()).unwrap_or(false),
        ];
        let has_bias = bias.is_some();
        let vjp = move |dy: &[T]| {
            let gx = needs[0].then(|| {
                let mut g = vec![T::zero(); xd.len()];
                for b in 0..batch {
                    for o in 0..o_dim {
                        let drow = &dy[(b * o_dim + o) * s_len..(b * o_dim + o + 1) * s_len];
                        for ch in 0..c {
                            let wv = wrc[o * c + ch];
                            let grow = &mut g[(b * c + ch) * s_len..(b * c + ch + 1) * s_len];
                            for s in 0..s_len {
                                grow[s] = grow[s] + wv * drow[s];
                            }
                        }
                    }
                }
                g
            });
            let gw = needs[1].then(|| {
                let mut g = vec![T::zero(); o_dim * c];
                for b in 0..batch {
                    for o in 0..o_dim {
                        let drow = &dy[(b * o_dim + o) * s_len..(b * o_dim + o + 1) * s_len];
                        for ch in 0..c {
                            let xrow = &xd[(b * c + ch) * s_len..(b * c + ch + 1) * s_len];
                            let mut acc = T::zero();
                            for s in 0..s_len {
                                acc = acc + drow[s] * xrow[s];
                            }
                            g[o * c + ch] = g[o * c + ch] + acc;
                        }
                    }
                }
                g
            });
            let gb = (has_bias && needs[2]).then(|| {
                let mut g = vec![T::zero(); o_dim];
                for b in 0..batch {
                    for o in 0..o_dim {
                        let drow = &dy[(b * o_dim + o) * s_len..(b * o_dim + o + 1) * s_len];
                        let mut acc = T::zero();
                        for s in 0..s_len {
                            acc = acc + drow[s];
                        }
                        g[o] = g[o] + acc;
                    }
                }
                g
            });
            if has_bias {
                vec![gx, gw, gb]
            } else {
                vec![gx, gw]
            }
        };
        match bias {
            Some(b) => Tensor::record(out, &[self, w, b], vjp),
            None => Tensor::record(out, &[self, w], vjp),
        }
    }

    /// Channels `[start, start+len)` of a `[B,C,..]` tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        if self.rank() < 3 {
            return Err(Error::shape(format!(
                "slice_channels wants rank >= 3, got {:?}",
                self.shape()
            )));
        }
        let c = self.shape()[1];
        if len == 0 || start + len > c {
            return Err(Error::shape(format!(
                "slice_channels [{start}, {}) of {c} channels",
                start + len
            )));
        }
        let (batch, _, s_len) = split_axis(self.shape(), 1);
        let x = self.data();
        let mut y = vec![T::zero(); batch * len * s_len];
        for b in 0..batch {
            for ch in 0..len {
                let src = (b * c + start + ch) * s_len;
                let dst = (b * len + ch) * s_len;
                y[dst..dst + s_len].copy_from_slice(&x[src..src + s_len]);
            }
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[1] = len;
        let out = Tensor::plain(out_shape, y);
        let total = x.len();
        let need = self.requires_grad();
        Tensor::record(out, &[self], move |dy| {
            if !need {
                return vec![None];
            }
            let mut g = vec![T::zero(); total];
            for b in 0..batch {
                for ch in 0..len {
                    let dst = (b * c + start + ch) * s_len;
                    let src = (b * len + ch) * s_len;
                    g[dst..dst + s_len].copy_from_slice(&dy[src..src + s_len]);
                }
            }
            vec![Some(g)]
        })
    }

    /// Expands a `[B,C,1,1]` map to `[B,C,h,w]` by repetition.
    pub fn broadcast_hw(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        let (n, c, h0, w0) = self.dims4("broadcast_hw")?;
        if (h0, w0) != (1, 1) {
            return Err(Error::shape(format!(
                "broadcast_hw source must be [B,C,1,1], got {:?}",
                self.shape()
            )));
        }
        let x = self.data();
        let mut y = vec![T::zero(); n * c * h * w];
        for i in 0..n * c {
            let v = x[i];
            for p in 0..h * w {
                y[i * h * w + p] = v;
            }
        }
        let out = Tensor::plain(vec![n, c, h, w], y);
        let need = self.requires_grad();
        Tensor::record(out, &[self], move |dy| {
            if !need {
                return vec![None];
            }
            let mut g = vec![T::zero(); n * c];
            for i in 0..n * c {
                let mut acc = T::zero();
                for p in 0..h * w {
                    acc = acc + dy[i * h * w + p];
                }
                g[i] = acc;
            }
            vec![Some(g)]
        })
    }

    /// Zero-pads a `[B,C,H,W]` map on the bottom/right edges to `(h, w)`.
    pub fn pad_hw(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        let (n, c, h0, w0) = self.dims4("pad_hw")?;
        if h < h0 || w < w0 {
            return Err(Error::shape(format!(
                "pad_hw target ({h},{w}) smaller than source ({h0},{w0})"
            )));
        }
        let x = self.data();
        let mut y = vec![T::zero(); n * c * h * w];
        for i in 0..n * c {
            for r in 0..h0 {
                let src = (i * h0 + r) * w0;
                let dst = (i * h + r) * w;
                y[dst..dst + w0].copy_from_slice(&x[src..src + w0]);
            }
        }
        let out = Tensor::plain(vec![n, c, h, w], y);
        let need = self.requires_grad();
        Tensor::record(out, &[self], move |dy| {
            if !need {
                return vec![None];
            }
            let mut g = vec![T::zero(); n * c * h0 * w0];
            for i in 0..n * c {
                for r in 0..h0 {
                    let dst = (i * h0 + r) * w0;
                    let src = (i * h + r) * w;
                    g[dst..dst + w0].copy_from_slice(&dy[src..src + w0]);
                }
            }
            vec![Some(g)]
        })
    }

    /// Top-left crop of a `[B,C,H,W]` map to `(h, w)`.
    pub fn crop_hw(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        let (n, c, h0, w0) = self.dims4("crop_hw")?;
        if h > h0 || w > w0 {
            return Err(Error::shape(format!(
                "crop_hw target ({h},{w}) larger than source ({h0},{w0})"
            )));
        }
        let x = self.data();
        let mut y = vec![T::zero(); n * c * h * w];
        for i in 0..n * c {
            for r in 0..h {
                let src = (i * h0 + r) * w0;
                let dst = (i * h + r) * w;
                y[dst..dst + w].copy_from_slice(&x[src..src + w]);
            }
        }
        let out = Tensor::plain(vec![n, c, h, w], y);
        let need = self.requires_grad();
        Tensor::record(out, &[self], move |dy| {
            if !need {
                return vec![None];
            }
            let mut g = vec![T::zero(); n * c * h0 * w0];
            for i in 0..n * c {
                for r in 0..h {
                    let dst = (i * h0 + r) * w0;
                    let src = (i * h + r) * w;
                    g[dst..dst + w].copy_from_slice(&dy[src..src + w]);
                }
            }
            vec![Some(g)]
        })
    }
}

fn softplus_scalar<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Concatenates `[B,C_i,..]` tensors along the channel axis.
pub fn concat_channels<T: Real>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return Err(Error::shape("concat_channels of zero tensors"));
    }
    let first = xs[0];
    if first.rank() < 3 {
        return Err(Error::shape(format!(
            "concat_channels wants rank >= 3, got {:?}",
            first.shape()
        )));
    }
    let (batch, _, s_len) = split_axis(first.shape(), 1);
    let mut chans = Vec::with_capacity(xs.len());
    for x in xs {
        if x.rank() != first.rank()
            || x.shape()[0] != first.shape()[0]
            || x.shape()[2..] != first.shape()[2..]
        {
            return Err(Error::shape(format!(
                "concat_channels: {:?} does not match {:?} outside axis 1",
                x.shape(),
                first.shape()
            )));
        }
        chans.push(x.shape()[1]);
    }
    let c_total: usize = chans.iter().sum();
    let mut y = vec![T::zero(); batch * c_total * s_len];
    for b in 0..batch {
        let mut at = 0usize;
        for (x, &cx) in xs.iter().zip(&chans) {
            let xd = x.data();
            for ch in 0..cx {
                let src = (b * cx + ch) * s_len;
                let dst = (b * c_total + at + ch) * s_len;
                y[dst..dst + s_len].copy_from_slice(&xd[src..src + s_len]);
            }
            at += cx;
        }
    }
    let mut out_shape = first.shape().to_vec();
    out_shape[1] = c_total;
    let out = Tensor::plain(out_shape, y);
    let needs: Vec<bool> = xs.iter().map(|x| x.requires_grad()).collect();
    let chans_v = chans.clone();
    Tensor::record(out, xs, move |dy| {
        let mut grads = Vec::with_capacity(chans_v.len());
        let mut at = 0usize;
        for (k, &cx) in chans_v.iter().enumerate() {
            if !needs[k] {
                grads.push(None);
                at += cx;
                continue;
            }
            let mut g = vec![T::zero(); batch * cx * s_len];
            for b in 0..batch {
                for ch in 0..cx {
                    let src = (b * c_total + at + ch) * s_len;
                    let dst = (b * cx + ch) * s_len;
                    g[dst..dst + s_len].copy_from_slice(&dy[src..src + s_len]);
                }
            }
            grads.push(Some(g));
            at += cx;
        }
        grads
    })
}
