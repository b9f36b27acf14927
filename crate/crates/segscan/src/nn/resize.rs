//! Bilinear resizing with half-pixel source mapping.

use crate::error::Result;
use crate::real::Real;
use crate::tensor::Tensor;

/// Per-axis interpolation taps: `dst` reads `w0 * src[i0] + w1 * src[i1]`.
fn taps<T: Real>(n_in: usize, n_out: usize) -> Vec<(usize, usize, T, T)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|d| {
            // Half-pixel centers, clamped at the low edge.
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = src.floor() as usize;
            let i0 = i0.min(n_in - 1);
            let frac = src - i0 as f64;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, T::of(1.0 - frac), T::of(frac))
        })
        .collect()
}

/// Resizes `[B,C,H,W]` to `(out_h, out_w)` by bilinear interpolation with
/// half-pixel centers. Same-size calls return the input unchanged.
pub fn bilinear_resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = x.dims4("bilinear_resize input")?;
    if (out_h, out_w) == (h, w) {
        return Ok(x.clone());
    }
    if out_h == 0 || out_w == 0 {
        return Err(crate::error::Error::shape("bilinear_resize to zero size"));
    }
    let rows = taps::<T>(h, out_h);
    let cols = taps::<T>(w, out_w);
    let xd = x.data();
    let mut y = vec![T::zero(); bsz * c * out_h * out_w];
    for i in 0..bsz * c {
        let src = &xd[i * h * w..(i + 1) * h * w];
        let dst = &mut y[i * out_h * out_w..(i + 1) * out_h * out_w];
        for (r, &(r0, r1, rw0, rw1)) in rows.iter().enumerate() {
            for (cc, &(c0, c1, cw0, cw1)) in cols.iter().enumerate() {
                let top = rw0 * (cw0 * src[r0 * w + c0] + cw1 * src[r0 * w + c1]);
                let bot = rw1 * (cw0 * src[r1 * w + c0] + cw1 * src[r1 * w + c1]);
                dst[r * out_w + cc] = top + bot;
            }
        }
    }
    let out = Tensor::plain(vec![bsz, c, out_h, out_w], y);
    let need = x.requires_grad();
    let planes = bsz * c;
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let mut g = vec![T::zero(); planes * h * w];
        for i in 0..planes {
            let src = &mut g[i * h * w..(i + 1) * h * w];
            let dst = &dy[i * out_h * out_w..(i + 1) * out_h * out_w];
            for (r, &(r0, r1, rw0, rw1)) in rows.iter().enumerate() {
                for (cc, &(c0, c1, cw0, cw1)) in cols.iter().enumerate() {
                    let d = dst[r * out_w + cc];
                    src[r0 * w + c0] = src[r0 * w + c0] + rw0 * cw0 * d;
                    src[r0 * w + c1] = src[r0 * w + c1] + rw0 * cw1 * d;
                    src[r1 * w + c0] = src[r1 * w + c0] + rw1 * cw0 * d;
                    src[r1 * w + c1] = src[r1 * w + c1] + rw1 * cw1 * d;
                }
            }
        }
        vec![Some(g)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, trunc_normal};
    use crate::tensor::grad_check;

    #[test]
    fn same_size_is_bitwise_identity() {
        let x = Tensor::from_vec(&[1, 2, 3, 3], (0..18).map(|i| i as f32 * 0.7).collect()).unwrap();
        let y = bilinear_resize(&x, 3, 3).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn constants_stay_constant() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![2.5f64]).unwrap();
        let y = bilinear_resize(&x, 3, 3).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
        let x = Tensor::from_vec(&[1, 1, 4, 4], vec![-0.75f64; 16]).unwrap();
        let y = bilinear_resize(&x, 7, 5).unwrap();
        assert!(y.data().iter().all(|&v| (v + 0.75).abs() < 1e-12));
    }

    #[test]
    fn two_by_two_upsample_matches_hand_table() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0f64, 2.0, 4.0, 6.0]).unwrap();
        let y = bilinear_resize(&x, 4, 4).unwrap();
        // Half-pixel sources per output index: 0, 0.25, 0.75, 1 (clamped),
        // evaluated by hand at all 16 points.
        let want = [
            0.0, 0.5, 1.5, 2.0, //
            1.0, 1.5, 2.5, 3.0, //
            3.0, 3.5, 4.5, 5.0, //
            4.0, 4.5, 5.5, 6.0,
        ];
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "got {:?}", y.data());
        }
    }

    #[test]
    fn downsample_averages_neighbors() {
        // 4 -> 2 with half-pixel centers lands exactly between sample pairs.
        let x = Tensor::from_vec(&[1, 1, 1, 4], vec![0.0f64, 2.0, 4.0, 6.0]).unwrap();
        let y = bilinear_resize(&x, 1, 2).unwrap();
        assert_eq!(y.data(), &[1.0, 5.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(21);
        let x = Tensor::from_vec(&[1, 2, 3, 4], trunc_normal::<f64>(&mut rng, 24, 1.0)).unwrap();
        let probe = Tensor::from_vec(&[1, 2, 5, 3], trunc_normal::<f64>(&mut rng, 30, 1.0)).unwrap();
        let err = grad_check(
            |xs| bilinear_resize(&xs[0], 5, 3)?.mul(&probe)?.sum(),
            &[x],
        )
        .unwrap();
        assert!(err < 1e-8, "resize grad err {err}");
    }
}
