//! Effective receptive field measurement, plus an exact reachability oracle.
//!
//! The empirical side ([`erf_map`]) backpropagates a one-hot seed from the
//! center pixel of a feature map to the input over random images and
//! accumulates absolute input gradients. The analytic side walks the same
//! network's geometry ([`reachable_box`]) to find the exact set of input
//! pixels that can influence that center pixel at all. For a windowed-
//! attention-only encoder the two agree: the measured map is identically
//! zero outside the reachable box and positive throughout its interior.

use crate::error::{Error, Result};
use crate::init::{seeded, uniform};
use crate::model::{MixerKind, ModelConfig};
use crate::real::Real;
use crate::tensor::{Tape, Tensor};

/// Measures the effective receptive field of `feature` (any map from a
/// `[1,C,h,w]` image to a `[1,C',h',w']` feature stack).
///
/// For each of `samples` random images, a gradient is pulled back from a
/// seed of ones across all channels at the center pixel `(h'/2, w'/2)`,
/// and `sum_c |d feature / d input|` is accumulated per input pixel. The
/// returned `h*w` map is normalized so its peak is 1 (left as zeros when
/// nothing reaches the input).
pub fn erf_map<T, F>(
    feature: F,
    in_channels: usize,
    h: usize,
    w: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    T: Real,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    if samples == 0 {
        return Err(Error::config("erf_map: samples must be at least 1"));
    }
    let mut rng = seeded(seed);
    let mut heat = vec![0.0f64; h * w];
    for _ in 0..samples {
        let image = Tensor::from_vec(
            &[1, in_channels, h, w],
            uniform(&mut rng, in_channels * h * w, 0.0, 1.0),
        )?;
        let tape: Tape<T> = Tape::new();
        let x = tape.var(&image);
        let y = feature(&x)?;
        let (b, cy, hy, wy) = y.dims4("erf_map feature")?;
        if b != 1 {
            return Err(Error::shape(format!("erf_map: feature batch {b}")));
        }
        let mut pull = vec![T::zero(); y.numel()];
        let center = (hy / 2) * wy + wy / 2;
        for c in 0..cy {
            pull[c * hy * wy + center] = T::one();
        }
        y.backward_seeded(&pull)?;
        let g = x
            .grad()
            .ok_or_else(|| Error::graph("erf_map: input received no gradient"))?;
        let gd = g.data();
        for c in 0..in_channels {
            for s in 0..h * w {
                heat[s] += gd[c * h * w + s].as_f64().abs();
            }
        }
    }
    let peak = heat.iter().cloned().fold(0.0f64, f64::max);
    if peak > 0.0 {
        for v in &mut heat {
            *v /= peak;
        }
    }
    Ok(heat)
}

/// One resolution-changing or window-mixing step of encoder geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    /// A dense convolution: kernel `k`, stride `s`, symmetric padding `p`.
    Conv { k: usize, s: usize, p: usize },
    /// A sliding-window mix with nominal window `k` on the current grid.
    Window { k: usize },
}

/// The encoder's spatial hops from the input image to the stage-4 grid.
/// Pointwise work (1x1 convolutions, norms, the FFN) moves no information
/// across pixels and is omitted. Only meaningful when the token mixer is
/// windowed attention alone; scan or global paths reach every pixel, so the
/// walk would be vacuous.
pub fn encoder_hops(cfg: &ModelConfig) -> Result<Vec<Hop>> {
    if cfg.mixer != MixerKind::NattenOnly {
        return Err(Error::config(
            "encoder_hops: receptive field is unbounded unless the mixer is window-only",
        ));
    }
    let mut hops = vec![
        Hop::Conv { k: 3, s: 2, p: 1 },
        Hop::Conv { k: 3, s: 2, p: 1 },
    ];
    for stage in 0..4 {
        if stage > 0 {
            hops.push(Hop::Conv { k: 3, s: 2, p: 1 });
        }
        for _ in 0..cfg.stage_blocks[stage] {
            hops.push(Hop::Window {
                k: cfg.window_sizes[stage],
            });
        }
    }
    Ok(hops)
}

/// Inclusive per-axis interval of input coordinates that can influence the
/// center pixel of the stage-4 feature map, as `((y_lo, y_hi), (x_lo, x_hi))`.
///
/// Walks [`encoder_hops`] forward to learn each grid's size, then backward
/// mapping the center through each hop: a stride-`s` convolution sends
/// `[a,b]` to `[a*s-p, b*s-p+k-1]` clamped to the grid, and a window hop
/// widens the interval to the union of the clamped window spans of its
/// endpoints (the same clamping the attention kernel applies).
pub fn reachable_box(
    cfg: &ModelConfig,
    h: usize,
    w: usize,
) -> Result<((usize, usize), (usize, usize))> {
    if h % 32 != 0 || w % 32 != 0 {
        return Err(Error::config(format!(
            "reachable_box: {h}x{w} input is not divisible by 32"
        )));
    }
    let hops = encoder_hops(cfg)?;
    // Forward: grid size before each hop.
    let mut sizes = Vec::with_capacity(hops.len());
    let (mut ch, mut cw) = (h, w);
    for hop in &hops {
        sizes.push((ch, cw));
        if let Hop::Conv { k, s, p } = hop {
            ch = (ch + 2 * p - k) / s + 1;
            cw = (cw + 2 * p - k) / s + 1;
        }
    }
    // Backward from the center of the final grid.
    let (mut y, mut x) = ((ch / 2, ch / 2), (cw / 2, cw / 2));
    for (hop, &(gh, gw)) in hops.iter().zip(sizes.iter()).rev() {
        match *hop {
            Hop::Conv { k, s, p } => {
                y = conv_preimage(y, k, s, p, gh);
                x = conv_preimage(x, k, s, p, gw);
            }
            Hop::Window { k } => {
                // Layer-level clamp: the effective window never exceeds the
                // odd bound of the smaller axis.
                let k_eff = k.min(2 * gh.min(gw) - 1);
                y = window_preimage(y, k_eff, gh);
                x = window_preimage(x, k_eff, gw);
            }
        }
    }
    Ok((y, x))
}

fn conv_preimage((a, b): (usize, usize), k: usize, s: usize, p: usize, size: usize) -> (usize, usize) {
    let lo = (a * s).saturating_sub(p);
    let hi = (b * s + k - 1).saturating_sub(p).min(size - 1);
    (lo, hi)
}

fn window_preimage((a, b): (usize, usize), k: usize, size: usize) -> (usize, usize) {
    (window_span(a, k, size).0, window_span(b, k, size).1)
}

/// Inclusive span of the clamped window centered (where possible) at `i`.
fn window_span(i: usize, k: usize, size: usize) -> (usize, usize) {
    let len = k.min(size);
    let start = i.saturating_sub((k - 1) / 2).min(size - len);
    (start, start + len - 1)
}
