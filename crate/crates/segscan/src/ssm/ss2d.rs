//! SS2D: the four-direction 2D selective-scan block.
//!
//! Input projection splits into a value branch (depthwise 3x3 conv + SiLU)
//! and, optionally, a SiLU gate. The value branch is serialized along each
//! of the four scan orders, run through an independent selective scan per
//! direction, restored to 2D, and summed; layer norm, gating, and an output
//! projection close the block. Cost is linear in the pixel count.

use crate::error::{Error, Result};
use crate::init::{trunc_normal, Rng};
use crate::nn::{Conv2d, Params, Slot};
use crate::real::Real;
use crate::ssm::reorder::{directional_reorder, directional_restore, NUM_DIRECTIONS};
use crate::ssm::scan::{selective_scan_1d, SsmParams};
use crate::tensor::Tensor;

pub struct Ss2dBlock<T: Real> {
    /// `[(1 or 2)*E*D, D]`, no bias; rows `0..E*D` feed the value branch and,
    /// when gated, rows `E*D..` feed the gate.
    pub in_proj: Tensor<T>,
    /// Depthwise 3x3 over the `E*D` value channels.
    pub dwconv: Conv2d<T>,
    /// One independent scan per direction.
    pub scans: Vec<SsmParams<T>>,
    pub norm_gamma: Tensor<T>,
    pub norm_beta: Tensor<T>,
    /// `[D, E*D]`, no bias.
    pub out_proj: Tensor<T>,
    pub gated: bool,
}

impl<T: Real> Ss2dBlock<T> {
    /// `d`: block channels; `expand`: inner-width ratio E; `n`: state size.
    pub fn new(rng: &mut Rng, d: usize, expand: usize, n: usize, gated: bool) -> Result<Ss2dBlock<T>> {
        if d == 0 || expand == 0 {
            return Err(Error::config("ss2d wants D >= 1 and E >= 1"));
        }
        let inner = expand * d;
        let proj_rows = if gated { 2 * inner } else { inner };
        let scans = (0..NUM_DIRECTIONS)
            .map(|_| SsmParams::new(rng, inner, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ss2dBlock {
            in_proj: Tensor::from_vec(&[proj_rows, d], trunc_normal(rng, proj_rows * d, 0.02))?,
            dwconv: Conv2d::new(rng, inner, inner, 3, 1, 1, inner, true)?,
            scans,
            norm_gamma: Tensor::full(&[inner], T::one()),
            norm_beta: Tensor::zeros(&[inner]),
            out_proj: Tensor::from_vec(&[d, inner], trunc_normal(rng, d * inner, 0.02))?,
            gated,
        })
    }

    pub fn channels(&self) -> usize {
        self.out_proj.shape()[0]
    }

    fn inner(&self) -> usize {
        self.out_proj.shape()[1]
    }

    /// Projection + depthwise conv + SiLU; returns `(value, gate)`.
    fn value_and_gate(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let inner = self.inner();
        let proj = x.channel_linear(&self.in_proj, None)?;
        let value = if self.gated {
            proj.slice_channels(0, inner)?
        } else {
            proj.clone()
        };
        let gate = if self.gated {
            Some(proj.slice_channels(inner, inner)?)
        } else {
            None
        };
        Ok((self.dwconv.forward(&value)?.silu()?, gate))
    }

    /// Sum of the four directional scans, back in 2D layout.
    fn scan_sum(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = v.dims4("ss2d value branch")?;
        let mut acc: Option<Tensor<T>> = None;
        for (dir, params) in self.scans.iter().enumerate() {
            let seq = directional_reorder(v, dir)?;
            let scanned = selective_scan_1d(&seq, params)?;
            let back = directional_restore(&scanned, dir, h, w)?;
            acc = Some(match acc {
                None => back,
                Some(a) => a.add(&back)?,
            });
        }
        Ok(acc.expect("four directions"))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4("ss2d input")?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "ss2d over {} channels applied to {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let (value, gate) = self.value_and_gate(x)?;
        let mixed = self.scan_sum(&value)?;
        let normed = mixed.layer_norm(&self.norm_gamma, &self.norm_beta, 1e-6)?;
        let gated = match gate {
            Some(g) => normed.mul(&g.silu()?)?,
            None => normed,
        };
        gated.channel_linear(&self.out_proj, None)
    }
}

impl<T: Real> Params<T> for Ss2dBlock<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.in_proj"), Slot::Trainable(&mut self.in_proj));
        self.dwconv.visit(&format!("{prefix}.dwconv"), f);
        for (i, s) in self.scans.iter_mut().enumerate() {
            s.visit(&format!("{prefix}.scan{i}"), f);
        }
        f(format!("{prefix}.norm_gamma"), Slot::Trainable(&mut self.norm_gamma));
        f(format!("{prefix}.norm_beta"), Slot::Trainable(&mut self.norm_beta));
        f(format!("{prefix}.out_proj"), Slot::Trainable(&mut self.out_proj));
    }
}
