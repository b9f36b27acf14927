//! The 1D selective state-space scan and its brute-force oracle.
//!
//! Per batch and channel the recurrence is
//!
//! ```text
//! h_t = exp(dt_t * A) (.) h_{t-1} + dt_t * B_t * u_t        h_0 from h_{-1} = 0
//! y_t = sum_n C_t[n] * h_t[n] + D_skip * u_t
//! ```
//!
//! with `A[d,n] < 0` and `dt > 0`, so `exp(dt*A) < 1` and states contract.
//! `dt`, `B`, and `C` are data-dependent: projected per token from the input
//! by `x_proj` (shared across channels for B/C) and `dt_proj`.

use crate::error::{Error, Result};
use crate::init::{softplus_inv, trunc_normal, uniform, Rng};
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::{ensure_finite, Tensor};

/// `dt_rank` rule: `max(1, ceil(D/16))`.
pub fn dt_rank_for(d: usize) -> usize {
    d.div_ceil(16).max(1)
}

/// Parameters of one directional scan over `D`-channel sequences.
pub struct SsmParams<T: Real> {
    /// `[D,N]`; the state matrix is `A = -exp(a_log)`, strictly negative.
    pub a_log: Tensor<T>,
    /// `[dt_rank + 2N, D]`, no bias: token features to `(dt_hat, B, C)`.
    pub x_proj_w: Tensor<T>,
    /// `[D, dt_rank]`: low-rank expansion of the step size.
    pub dt_proj_w: Tensor<T>,
    /// `[D]`; initialized so `softplus(bias)` lands in `[1e-3, 1e-1]`.
    pub dt_proj_b: Tensor<T>,
    /// `[D]` direct feedthrough.
    pub d_skip: Tensor<T>,
    pub n: usize,
    pub dt_rank: usize,
}

impl<T: Real> SsmParams<T> {
    pub fn new(rng: &mut Rng, d: usize, n: usize) -> Result<SsmParams<T>> {
        if d == 0 || n == 0 {
            return Err(Error::config("scan wants D >= 1 and N >= 1"));
        }
        let dt_rank = dt_rank_for(d);
        let a_log: Vec<T> = (0..d * n)
            .map(|i| T::of(((i % n + 1) as f64).ln()))
            .collect();
        let dt_bias: Vec<T> = uniform::<f64>(rng, d, 1e-3, 1e-1)
            .into_iter()
            .map(|u| T::of(softplus_inv(u)))
            .collect();
        Ok(SsmParams {
            a_log: Tensor::from_vec(&[d, n], a_log)?,
            x_proj_w: Tensor::from_vec(
                &[dt_rank + 2 * n, d],
                trunc_normal(rng, (dt_rank + 2 * n) * d, 0.02),
            )?,
            dt_proj_w: Tensor::from_vec(&[d, dt_rank], trunc_normal(rng, d * dt_rank, 0.02))?,
            dt_proj_b: Tensor::from_vec(&[d], dt_bias)?,
            d_skip: Tensor::full(&[d], T::one()),
            n,
            dt_rank,
        })
    }

    pub fn channels(&self) -> usize {
        self.a_log.shape()[0]
    }
}

impl<T: Real> Params<T> for SsmParams<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>)) {
        f(format!("{prefix}.a_log"), Slot::Trainable(&mut self.a_log));
        f(format!("{prefix}.x_proj_w"), Slot::Trainable(&mut self.x_proj_w));
        f(format!("{prefix}.dt_proj_w"), Slot::Trainable(&mut self.dt_proj_w));
        f(format!("{prefix}.dt_proj_b"), Slot::Trainable(&mut self.dt_proj_b));
        f(format!("{prefix}.d_skip"), Slot::Trainable(&mut self.d_skip));
    }
}

/// The raw recurrence over explicit per-token tensors.
///
/// Shapes: `u, delta: [B,D,L]`, `a: [D,N]`, `b, c: [B,N,L]`, `d_skip: [D]`.
/// Output `[B,D,L]`. The VJP is hand-written; when any input is tracked the
/// forward keeps all `B*D*L*N` hidden states for the reverse sweep.
pub fn scan_core<T: Real>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    d_skip: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (bsz, dd, ll) = u.dims3("scan_core u")?;
    if delta.shape() != u.shape() {
        return Err(Error::shape(format!(
            "scan_core delta {:?} vs u {:?}",
            delta.shape(),
            u.shape()
        )));
    }
    let (da, nn) = match a.shape()[..] {
        [da, nn] => (da, nn),
        _ => return Err(Error::shape(format!("scan_core a rank {:?}", a.shape()))),
    };
    if da != dd {
        return Err(Error::shape(format!("scan_core a {:?} for D={dd}", a.shape())));
    }
    if b.shape() != [bsz, nn, ll] || c.shape() != [bsz, nn, ll] {
        return Err(Error::shape(format!(
            "scan_core b {:?} / c {:?} want [{bsz},{nn},{ll}]",
            b.shape(),
            c.shape()
        )));
    }
    if d_skip.shape() != [dd] {
        return Err(Error::shape(format!(
            "scan_core d_skip {:?} for D={dd}",
            d_skip.shape()
        )));
    }

    let tracked = u.requires_grad()
        || delta.requires_grad()
        || a.requires_grad()
        || b.requires_grad()
        || c.requires_grad()
        || d_skip.requires_grad();

    let ud = u.data_rc();
    let deltad = delta.data_rc();
    let ad = a.data_rc();
    let bd = b.data_rc();
    let cd = c.data_rc();
    let dskipd = d_skip.data_rc();

    let mut y = vec![T::zero(); bsz * dd * ll];
    // Hidden-state trace for the reverse sweep, laid out [(b,d,t), n].
    let mut hs: Vec<T> = if tracked {
        vec![T::zero(); bsz * dd * ll * nn]
    } else {
        Vec::new()
    };
    let mut h = vec![T::zero(); nn];
    for bb in 0..bsz {
        for d in 0..dd {
            let row = (bb * dd + d) * ll;
            let arow = &ad[d * nn..(d + 1) * nn];
            let skip = dskipd[d];
            h.iter_mut().for_each(|v| *v = T::zero());
            for t in 0..ll {
                let dt = deltad[row + t];
                let ut = ud[row + t];
                let mut yt = skip * ut;
                for n in 0..nn {
                    let alpha = (dt * arow[n]).exp();
                    let hv = alpha * h[n] + dt * bd[(bb * nn + n) * ll + t] * ut;
                    h[n] = hv;
                    yt = yt + cd[(bb * nn + n) * ll + t] * hv;
                }
                if tracked {
                    hs[(row + t) * nn..(row + t + 1) * nn].copy_from_slice(&h);
                }
                y[row + t] = yt;
            }
        }
    }
    ensure_finite("scan_core", &y)?;
    let out = Tensor::plain(u.shape().to_vec(), y);

    let needs = [
        u.requires_grad(),
        delta.requires_grad(),
        a.requires_grad(),
        b.requires_grad(),
        c.requires_grad(),
        d_skip.requires_grad(),
    ];
    Tensor::record(out, &[u, delta, a, b, c, d_skip], move |dy| {
        let mut gu = vec![T::zero(); ud.len()];
        let mut gdelta = vec![T::zero(); deltad.len()];
        let mut ga = vec![T::zero(); ad.len()];
        let mut gb = vec![T::zero(); bd.len()];
        let mut gc = vec![T::zero(); cd.len()];
        let mut gskip = vec![T::zero(); dskipd.len()];
        let mut lambda = vec![T::zero(); nn];
        for bb in 0..bsz {
            for d in 0..dd {
                let row = (bb * dd + d) * ll;
                let arow = &ad[d * nn..(d + 1) * nn];
                lambda.iter_mut().for_each(|v| *v = T::zero());
                for t in (0..ll).rev() {
                    let dt = deltad[row + t];
                    let ut = ud[row + t];
                    let dyt = dy[row + t];
                    gskip[d] = gskip[d] + dyt * ut;
                    let mut du_t = dyt * dskipd[d];
                    let mut ddt = T::zero();
                    for n in 0..nn {
                        let bt = bd[(bb * nn + n) * ll + t];
                        let ct = cd[(bb * nn + n) * ll + t];
                        let h_cur = hs[(row + t) * nn + n];
                        let h_prev = if t > 0 {
                            hs[(row + t - 1) * nn + n]
                        } else {
                            T::zero()
                        };
                        let alpha = (dt * arow[n]).exp();
                        // Fold this step's output into the state adjoint.
                        let lam = lambda[n] + dyt * ct;
                        gc[(bb * nn + n) * ll + t] = gc[(bb * nn + n) * ll + t] + dyt * h_cur;
                        gb[(bb * nn + n) * ll + t] = gb[(bb * nn + n) * ll + t] + lam * dt * ut;
                        ga[d * nn + n] = ga[d * nn + n] + lam * h_prev * dt * alpha;
                        ddt = ddt + lam * (h_prev * arow[n] * alpha + bt * ut);
                        du_t = du_t + lam * dt * bt;
                        // Pass through h_{t-1} = alpha (.) h_t dependency.
                        lambda[n] = lam * alpha;
                    }
                    gu[row + t] = du_t;
                    gdelta[row + t] = ddt;
                }
            }
        }
        let pick = |flag: bool, g: Vec<T>| if flag { Some(g) } else { None };
        vec![
            pick(needs[0], gu),
            pick(needs[1], gdelta),
            pick(needs[2], ga),
            pick(needs[3], gb),
            pick(needs[4], gc),
            pick(needs[5], gskip),
        ]
    })
}

/// The full selective scan: derives `(dt, B, C)` from `u` through the
/// parameter projections, then runs [`scan_core`]. Differentiable end to end.
pub fn selective_scan_1d<T: Real>(u: &Tensor<T>, p: &SsmParams<T>) -> Result<Tensor<T>> {
    let (_, dd, _) = u.dims3("selective_scan_1d input")?;
    if dd != p.channels() {
        return Err(Error::shape(format!(
            "scan over {} channels applied to {:?}",
            p.channels(),
            u.shape()
        )));
    }
    let dbc = u.channel_linear(&p.x_proj_w, None)?;
    let dt_hat = dbc.slice_channels(0, p.dt_rank)?;
    let b = dbc.slice_channels(p.dt_rank, p.n)?;
    let c = dbc.slice_channels(p.dt_rank + p.n, p.n)?;
    let delta = dt_hat
        .channel_linear(&p.dt_proj_w, Some(&p.dt_proj_b))?
        .softplus()?;
    let a = p.a_log.exp()?.mul_scalar(-T::one())?;
    scan_core(u, &delta, &a, &b, &c, &p.d_skip)
}

/// Ground-truth scan: the most literal per-timestep loop, projections
/// included, with every intermediate in 64-bit. Never records gradients and
/// is deliberately unoptimized.
pub fn selective_scan_ref<T: Real>(u: &Tensor<T>, p: &SsmParams<T>) -> Result<Tensor<T>> {
    let (bsz, dd, ll) = u.dims3("selective_scan_ref input")?;
    if dd != p.channels() {
        return Err(Error::shape(format!(
            "scan over {} channels applied to {:?}",
            p.channels(),
            u.shape()
        )));
    }
    let nn = p.n;
    let dtr = p.dt_rank;
    let f = |v: T| v.as_f64();
    let ud = u.data();
    let xw = p.x_proj_w.data();
    let dw = p.dt_proj_w.data();
    let db = p.dt_proj_b.data();
    let al = p.a_log.data();
    let sk = p.d_skip.data();
    let mut y = vec![T::zero(); bsz * dd * ll];
    for bb in 0..bsz {
        let mut h = vec![vec![0.0f64; nn]; dd];
        for t in 0..ll {
            // Token feature vector u_t.
            let x_t: Vec<f64> = (0..dd).map(|d| f(ud[(bb * dd + d) * ll + t])).collect();
            // x_proj: (dt_hat, B_t, C_t).
            let proj: Vec<f64> = (0..dtr + 2 * nn)
                .map(|r| (0..dd).map(|d| f(xw[r * dd + d]) * x_t[d]).sum())
                .collect();
            let b_t = &proj[dtr..dtr + nn];
            let c_t = &proj[dtr + nn..dtr + 2 * nn];
            for d in 0..dd {
                let pre: f64 = (0..dtr).map(|r| f(dw[d * dtr + r]) * proj[r]).sum::<f64>()
                    + f(db[d]);
                let dt = if pre > 0.0 {
                    pre + (-pre).exp().ln_1p()
                } else {
                    pre.exp().ln_1p()
                };
                let mut y_t = f(sk[d]) * x_t[d];
                for n in 0..nn {
                    let a = -f(al[d * nn + n]).exp();
                    h[d][n] = (dt * a).exp() * h[d][n] + dt * b_t[n] * x_t[d];
                    y_t += c_t[n] * h[d][n];
                }
                y[(bb * dd + d) * ll + t] = T::of(y_t);
            }
        }
    }
    ensure_finite("selective_scan_ref", &y)?;
    Ok(Tensor::plain(u.shape().to_vec(), y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};
    use crate::tensor::{grad_check, rel_err, Tape};

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data).unwrap()
    }

    fn ones(shape: &[usize]) -> Tensor<f64> {
        Tensor::full(shape, 1.0)
    }

    #[test]
    fn zero_decay_reduces_to_prefix_sum() {
        // A = 0 makes exp(dt*A) = 1; with dt = B = C = 1 and no feedthrough
        // the scan is a cumulative sum.
        let u = t(&[1, 1, 3], vec![1.0, 2.0, 3.0]);
        let y = scan_core(
            &u,
            &ones(&[1, 1, 3]),
            &Tensor::zeros(&[1, 1]),
            &ones(&[1, 1, 3]),
            &ones(&[1, 1, 3]),
            &Tensor::zeros(&[1]),
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 6.0]);
    }

    #[test]
    fn full_forgetting_is_memoryless() {
        // dt*A -> -inf zeroes the decay factor, so y_t = C*B*dt*u_t = u_t.
        let u = t(&[1, 1, 4], vec![4.0, -2.0, 0.5, 1.0]);
        let y = scan_core(
            &u,
            &ones(&[1, 1, 4]),
            &Tensor::full(&[1, 1], -1.0e9),
            &ones(&[1, 1, 4]),
            &ones(&[1, 1, 4]),
            &Tensor::zeros(&[1]),
        )
        .unwrap();
        assert!(rel_err(y.data(), u.data()) < 1e-15);
    }

    #[test]
    fn single_timestep_closed_form() {
        let mut rng = seeded(51);
        let p = SsmParams::<f64>::new(&mut rng, 3, 2).unwrap();
        let u = t(&[1, 3, 1], vec![0.7, -1.2, 0.4]);
        let y = selective_scan_ref(&u, &p).unwrap();
        // Unroll by hand: h_1 = dt*B_1*u_1, y_1 = C_1 . h_1 + D*u_1.
        let proj: Vec<f64> = (0..p.dt_rank + 4)
            .map(|r| (0..3).map(|d| p.x_proj_w.data()[r * 3 + d] * u.data()[d]).sum())
            .collect();
        for d in 0..3 {
            let pre: f64 = (0..p.dt_rank)
                .map(|r| p.dt_proj_w.data()[d * p.dt_rank + r] * proj[r])
                .sum::<f64>()
                + p.dt_proj_b.data()[d];
            let dt = if pre > 0.0 {
                pre + (-pre).exp().ln_1p()
            } else {
                pre.exp().ln_1p()
            };
            let mut want = p.d_skip.data()[d] * u.data()[d];
            for n in 0..2 {
                let a = -p.a_log.data()[d * 2 + n].exp();
                let h = (dt * a).exp() * 0.0 + dt * proj[p.dt_rank + n] * u.data()[d];
                want += proj[p.dt_rank + 2 + n] * h;
            }
            assert!((y.data()[d] - want).abs() < 1e-12, "channel {d}");
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = seeded(52);
        let p = SsmParams::<f64>::new(&mut rng, 4, 2).unwrap();
        let u = Tensor::zeros(&[2, 4, 5]);
        let y = selective_scan_ref(&u, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let y = selective_scan_1d(&u, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn optimized_scan_matches_reference_with_projections() {
        let mut rng = seeded(53);
        for (bsz, d, l, n) in [(2, 3, 7, 2), (1, 8, 16, 1), (3, 5, 4, 4)] {
            let p = SsmParams::<f64>::new(&mut rng, d, n).unwrap();
            let u = t(&[bsz, d, l], uniform(&mut rng, bsz * d * l, -2.0, 2.0));
            let fast = selective_scan_1d(&u, &p).unwrap();
            let slow = selective_scan_ref(&u, &p).unwrap();
            let err = rel_err(fast.data(), slow.data());
            assert!(err < 1e-12, "({bsz},{d},{l},{n}) err {err}");
        }
    }

    #[test]
    fn states_contract_under_zero_input() {
        // One impulse, then silence: |y| must be non-increasing afterwards
        // because every state multiplies by exp(dt*A) < 1 each step.
        let l = 10;
        let mut u = vec![0.0; l];
        u[0] = 1.0;
        let y = scan_core(
            &t(&[1, 1, l], u),
            &Tensor::full(&[1, 1, l], 0.5),
            &Tensor::full(&[1, 1], -0.7),
            &ones(&[1, 1, l]),
            &ones(&[1, 1, l]),
            &Tensor::zeros(&[1]),
        )
        .unwrap();
        for tt in 2..l {
            let prev = y.data()[tt - 1].abs();
            let cur = y.data()[tt].abs();
            assert!(cur <= prev + 1e-15, "t={tt}: {cur} > {prev}");
            assert!(cur > 0.0);
        }
    }

    #[test]
    fn non_finite_states_error_out() {
        // Positive A explodes the exponential; the kernel must refuse.
        let u = ones(&[1, 1, 4]);
        let r = scan_core(
            &u,
            &Tensor::full(&[1, 1, 4], 1000.0),
            &Tensor::full(&[1, 1], 1.0),
            &ones(&[1, 1, 4]),
            &ones(&[1, 1, 4]),
            &Tensor::zeros(&[1]),
        );
        assert!(matches!(r, Err(Error::Numerics(_))));
    }

    #[test]
    fn core_gradients_match_finite_differences() {
        let mut rng = seeded(54);
        let (bsz, d, l, n) = (1, 2, 4, 2);
        let u = t(&[bsz, d, l], uniform(&mut rng, bsz * d * l, -1.0, 1.0));
        let delta = t(&[bsz, d, l], uniform(&mut rng, bsz * d * l, 0.05, 0.8));
        let a = t(&[d, n], uniform(&mut rng, d * n, -1.5, -0.2));
        let b = t(&[bsz, n, l], uniform(&mut rng, bsz * n * l, -1.0, 1.0));
        let c = t(&[bsz, n, l], uniform(&mut rng, bsz * n * l, -1.0, 1.0));
        let skip = t(&[d], uniform(&mut rng, d, -1.0, 1.0));
        let probe = t(&[bsz, d, l], uniform(&mut rng, bsz * d * l, -1.0, 1.0));
        let err = grad_check(
            |xs| {
                scan_core(&xs[0], &xs[1], &xs[2], &xs[3], &xs[4], &xs[5])?
                    .mul(&probe)?
                    .sum()
            },
            &[u, delta, a, b, c, skip],
        )
        .unwrap();
        assert!(err < 1e-7, "scan core grad err {err}");
    }

    #[test]
    fn full_scan_gradients_match_finite_differences() {
        let mut rng = seeded(55);
        let p = SsmParams::<f64>::new(&mut rng, 3, 2).unwrap();
        let u = t(&[2, 3, 5], uniform(&mut rng, 30, -1.0, 1.0));
        let probe = t(&[2, 3, 5], uniform(&mut rng, 30, -1.0, 1.0));
        let err = grad_check(
            |xs| {
                let p = SsmParams {
                    a_log: xs[1].clone(),
                    x_proj_w: xs[2].clone(),
                    dt_proj_w: xs[3].clone(),
                    dt_proj_b: xs[4].clone(),
                    d_skip: xs[5].clone(),
                    n: p.n,
                    dt_rank: p.dt_rank,
                };
                selective_scan_1d(&xs[0], &p)?.mul(&probe)?.sum()
            },
            &[
                u,
                p.a_log.clone(),
                p.x_proj_w.clone(),
                p.dt_proj_w.clone(),
                p.dt_proj_b.clone(),
                p.d_skip.clone(),
            ],
        )
        .unwrap();
        assert!(err < 1e-6, "full scan grad err {err}");
    }

    #[test]
    fn backward_after_scan_reaches_every_earlier_token() {
        // Global context: the gradient of a late output w.r.t. the input
        // covers all earlier positions (causal within one direction).
        let mut rng = seeded(56);
        let p = SsmParams::<f64>::new(&mut rng, 2, 1).unwrap();
        let tape = Tape::new();
        let u = tape.var(&t(&[1, 2, 6], uniform(&mut rng, 12, 0.5, 1.5)));
        let y = selective_scan_1d(&u, &p).unwrap();
        let mut seed = vec![0.0; 12];
        seed[5] = 1.0; // d=0, t=5
        y.backward_seeded(&seed).unwrap();
        let g = u.grad().unwrap();
        for tt in 0..=5 {
            assert!(g.data()[tt].abs() > 0.0, "zero gradient at t={tt}");
        }
    }
}
