//! Pixel shuffle / unshuffle: lossless space-to-channel rearrangement.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Moves each non-overlapping `r x r` patch of `[B,C,H,W]` into channels:
/// output `[B, C*r*r, H/r, W/r]` with channel index `c*r*r + i*r + j` for
/// intra-patch offset `(i, j)`, row-major.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = x.dims4("pixel_unshuffle input")?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::shape(format!(
            "pixel_unshuffle factor {r} does not divide spatial dims {h}x{w}"
        )));
    }
    let (ho, wo) = (h / r, w / r);
    let co = c * r * r;
    let xd = x.data();
    let mut y = vec![T::zero(); xd.len()];
    for b in 0..bsz {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let oc = ch * r * r + i * r + j;
                    for oh in 0..ho {
                        for ow in 0..wo {
                            y[((b * co + oc) * ho + oh) * wo + ow] =
                                xd[((b * c + ch) * h + oh * r + i) * w + ow * r + j];
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::plain(vec![bsz, co, ho, wo], y);
    let need = x.requires_grad();
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let mut g = vec![T::zero(); dy.len()];
        for b in 0..bsz {
            for ch in 0..c {
                for i in 0..r {
                    for j in 0..r {
                        let oc = ch * r * r + i * r + j;
                        for oh in 0..ho {
                            for ow in 0..wo {
                                g[((b * c + ch) * h + oh * r + i) * w + ow * r + j] =
                                    dy[((b * co + oc) * ho + oh) * wo + ow];
                            }
                        }
                    }
                }
            }
        }
        vec![Some(g)]
    })
}

/// Exact inverse of [`pixel_unshuffle`]: `[B, C*r*r, H, W]` back to
/// `[B, C, H*r, W*r]`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (bsz, co, ho, wo) = x.dims4("pixel_shuffle input")?;
    if r == 0 || co % (r * r) != 0 {
        return Err(Error::shape(format!(
            "pixel_shuffle factor {r} does not divide {co} channels"
        )));
    }
    let c = co / (r * r);
    let (h, w) = (ho * r, wo * r);
    let xd = x.data();
    let mut y = vec![T::zero(); xd.len()];
    for b in 0..bsz {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let ic = ch * r * r + i * r + j;
                    for oh in 0..ho {
                        for ow in 0..wo {
                            y[((b * c + ch) * h + oh * r + i) * w + ow * r + j] =
                                xd[((b * co + ic) * ho + oh) * wo + ow];
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::plain(vec![bsz, c, h, w], y);
    let need = x.requires_grad();
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let mut g = vec![T::zero(); dy.len()];
        for b in 0..bsz {
            for ch in 0..c {
                for i in 0..r {
                    for j in 0..r {
                        let ic = ch * r * r + i * r + j;
                        for oh in 0..ho {
                            for ow in 0..wo {
                                g[((b * co + ic) * ho + oh) * wo + ow] =
                                    dy[((b * c + ch) * h + oh * r + i) * w + ow * r + j];
                            }
                        }
                    }
                }
            }
        }
        vec![Some(g)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};

    #[test]
    fn four_by_four_definitional_ordering() {
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| i as f32).collect()).unwrap();
        let y = pixel_unshuffle(&x, 4).unwrap();
        assert_eq!(y.shape(), &[1, 16, 1, 1]);
        // Channel k holds value k: c' = i*4 + j picks pixel (i, j).
        for k in 0..16 {
            assert_eq!(y.data()[k], k as f32);
        }
    }

    #[test]
    fn factor_one_is_identity() {
        let x = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|i| i as f64).collect()).unwrap();
        let y = pixel_unshuffle(&x, 1).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
        let z = pixel_shuffle(&x, 1).unwrap();
        assert_eq!(z.data(), x.data());
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = seeded(33);
        let x = Tensor::from_vec(&[2, 3, 8, 8], uniform::<f32>(&mut rng, 384, -5.0, 5.0)).unwrap();
        let back = pixel_shuffle(&pixel_unshuffle(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(back.shape(), x.shape());
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn rejects_non_dividing_factors() {
        let x = Tensor::from_vec(&[1, 1, 3, 4], vec![0.0f32; 12]).unwrap();
        assert!(matches!(pixel_unshuffle(&x, 2), Err(Error::Shape(_))));
        let x = Tensor::from_vec(&[1, 3, 2, 2], vec![0.0f32; 12]).unwrap();
        assert!(matches!(pixel_shuffle(&x, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_are_the_inverse_rearrangement() {
        use crate::tensor::grad_check;
        let mut rng = seeded(34);
        let x = Tensor::from_vec(&[1, 2, 4, 4], uniform::<f64>(&mut rng, 32, -1.0, 1.0)).unwrap();
        let probe = Tensor::from_vec(&[1, 8, 2, 2], uniform::<f64>(&mut rng, 32, -1.0, 1.0)).unwrap();
        let err = grad_check(
            |xs| pixel_unshuffle(&xs[0], 2)?.mul(&probe)?.sum(),
            &[x],
        )
        .unwrap();
        assert!(err < 1e-9, "unshuffle grad err {err}");
    }
}
