//! 2D convolution (cross-correlation, zero padding, square kernels).


use crate::error::{Error, Result};
use crate::init::{trunc_normal, Rng};
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::{ensure_finite, Tensor};

/// A grouped 2D convolution layer.
///
/// Weight layout is `[c_out, c_in/groups, k, k]`; padding is symmetric zero
/// padding; output dims follow `floor((in + 2p - k) / s) + 1`.
pub struct Conv2d<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl<T: Real> Conv2d<T> {
    /// Builds a layer with truncated-normal weights (std 0.02) and, when
    /// requested, a zero bias.
    pub fn new(
        rng: &mut Rng,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    ) -> Result<Conv2d<T>> {
        if k == 0 || stride == 0 || groups == 0 {
            return Err(Error::config("conv kernel, stride, and groups must be positive"));
        }
        if c_in % groups != 0 || c_out % groups != 0 {
            return Err(Error::config(format!(
                "conv groups {groups} must divide c_in {c_in} and c_out {c_out}"
            )));
        }
        let c_in_g = c_in / groups;
        let weight = Tensor::from_vec(
            &[c_out, c_in_g, k, k],
            trunc_normal(rng, c_out * c_in_g * k * k, 0.02),
        )?;
        let bias = bias.then(|| Tensor::zeros(&[c_out]));
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
            groups,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding, self.groups)
    }
}

impl<T: Real> Params<T> for Conv2d<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.weight"), Slot::Trainable(&mut self.weight));
        if let Some(b) = self.bias.as_mut() {
            f(format!("{prefix}.bias"), Slot::Trainable(b));
        }
    }
}

fn out_dim(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < k {
        return Err(Error::shape(format!(
            "conv kernel {k} exceeds padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Functional grouped convolution with a VJP for input, weight, and bias.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor<T>> {
    let (bsz, c_in, h, w) = x.dims4("conv2d input")?;
    let (c_out, c_in_g, kh, kw) = weight.dims4("conv2d weight")?;
    if kh != kw {
        return Err(Error::shape(format!("conv kernel must be square, got {kh}x{kw}")));
    }
    let k = kh;
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || c_in / groups != c_in_g {
        return Err(Error::shape(format!(
            "conv2d: input {c_in} channels, weight {:?}, groups {groups}",
            weight.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::shape(format!(
                "conv2d bias {:?} for {c_out} outputs",
                b.shape()
            )));
        }
    }
    let h_out = out_dim(h, k, stride, padding)?;
    let w_out = out_dim(w, k, stride, padding)?;
    let ocg = c_out / groups;

    let xd = x.data();
    let wd = weight.data();
    let mut y = vec![T::zero(); bsz * c_out * h_out * w_out];
    for b in 0..bsz {
        for oc in 0..c_out {
            let g = oc / ocg;
            let base_bias = bias.map(|t| t.data()[oc]).unwrap_or_else(T::zero);
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut acc = base_bias;
                    for icg in 0..c_in_g {
                        let ic = g * c_in_g + icg;
                        let xc = (b * c_in + ic) * h * w;
                        let wc = (oc * c_in_g + icg) * k * k;
                        for dh in 0..k {
                            let ih = oh * stride + dh;
                            if ih < padding || ih >= h + padding {
                                continue;
                            }
                            let ih = ih - padding;
                            for dw in 0..k {
                                let iw = ow * stride + dw;
                                if iw < padding || iw >= w + padding {
                                    continue;
                                }
                                let iw = iw - padding;
                                acc = acc + wd[wc + dh * k + dw] * xd[xc + ih * w + iw];
                            }
                        }
                    }
                    y[((b * c_out + oc) * h_out + oh) * w_out + ow] = acc;
                }
            }
        }
    }
    ensure_finite("conv2d", &y)?;
    let out = Tensor::plain(vec![bsz, c_out, h_out, w_out], y);

    let xrc = x.data_rc();
    let wrc = weight.data_rc();
    let needs = [
        x.requires_grad(),
        weight.requires_grad(),
        bias.map(|b| b.requires_grad()).unwrap_or(false),
    ];
    let has_bias = bias.is_some();
    let vjp = move |dy: &[T]| {
        let mut gx = needs[0].then(|| vec![T::zero(); xrc.len()]);
        let mut gw = needs[1].then(|| vec![T::zero(); wrc.len()]);
        let mut gb = (has_bias && needs[2]).then(|| vec![T::zero(); c_out]);
        for b in 0..bsz {
            for oc in 0..c_out {
                let g = oc / ocg;
                for oh in 0..h_out {
                    for ow in 0..w_out {
                        let d = dy[((b * c_out + oc) * h_out + oh) * w_out + ow];
                        if let Some(gb) = gb.as_mut() {
                            gb[oc] = gb[oc] + d;
                        }
                        for icg in 0..c_in_g {
                            let ic = g * c_in_g + icg;
                            let xc = (b * c_in + ic) * h * w;
                            let wc = (oc * c_in_g + icg) * k * k;
                            for dh in 0..k {
                                let ih = oh * stride + dh;
                                if ih < padding || ih >= h + padding {
                                    continue;
                                }
                                let ih = ih - padding;
                                for dw in 0..k {
                                    let iw = ow * stride + dw;
                                    if iw < padding || iw >= w + padding {
                                        continue;
                                    }
                                    let iw = iw - padding;
                                    if let Some(gx) = gx.as_mut() {
                                        gx[xc + ih * w + iw] =
                                            gx[xc + ih * w + iw] + wrc[wc + dh * k + dw] * d;
                                    }
                                    if let Some(gw) = gw.as_mut() {
                                        gw[wc + dh * k + dw] =
                                            gw[wc + dh * k + dw] + xrc[xc + ih * w + iw] * d;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if has_bias {
            vec![gx, gw, gb]
        } else {
            vec![gx, gw]
        }
    };
    match bias {
        Some(b) => Tensor::record(out, &[x, weight, b], vjp),
        None => Tensor::record(out, &[x, weight], vjp),
    }
}

/// Ungrouped convolution computed as explicit im2col + matmul. Used as an
/// independent oracle for `conv2d`.
pub fn im2col_ref<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (bsz, c_in, h, w) = x.dims4("im2col input")?;
    let (c_out, c_in_w, k, _) = weight.dims4("im2col weight")?;
    if c_in_w != c_in {
        return Err(Error::shape("im2col_ref only supports groups=1"));
    }
    let h_out = out_dim(h, k, stride, padding)?;
    let w_out = out_dim(w, k, stride, padding)?;
    let xd = x.data();
    let rows = c_in * k * k;
    let cols = h_out * w_out;
    let mut y = vec![T::zero(); bsz * c_out * cols];
    for b in 0..bsz {
        // Columns of the unrolled patch matrix, zero where padding falls.
        let mut col = vec![T::zero(); rows * cols];
        for ic in 0..c_in {
            for dh in 0..k {
                for dw in 0..k {
                    let r = (ic * k + dh) * k + dw;
                    for oh in 0..h_out {
                        for ow in 0..w_out {
                            let ih = (oh * stride + dh) as isize - padding as isize;
                            let iw = (ow * stride + dw) as isize - padding as isize;
                            if ih < 0 || iw < 0 || ih >= h as isize || iw >= w as isize {
                                continue;
                            }
                            col[r * cols + oh * w_out + ow] =
                                xd[((b * c_in + ic) * h + ih as usize) * w + iw as usize];
                        }
                    }
                }
            }
        }
        let wmat = Tensor::from_vec(&[c_out, rows], weight.data().to_vec())?;
        let cmat = Tensor::from_vec(&[rows, cols], col)?;
        let prod = wmat.matmul(&cmat)?;
        let pd = prod.data();
        for oc in 0..c_out {
            let base = bias.map(|t| t.data()[oc]).unwrap_or_else(T::zero);
            for s in 0..cols {
                y[(b * c_out + oc) * cols + s] = pd[oc * cols + s] + base;
            }
        }
    }
    Ok(Tensor::plain(vec![bsz, c_out, h_out, w_out], y))
}
