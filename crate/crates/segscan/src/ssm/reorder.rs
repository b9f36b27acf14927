//! The four scan orders over a 2D map, as explicit permutations.
//!
//! - dir 0: row-major, left→right then top→bottom
//! - dir 1: dir 0 reversed
//! - dir 2: column-major, top→bottom then left→right
//! - dir 3: dir 2 reversed

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const NUM_DIRECTIONS: usize = 4;

/// `perm[t]` = flat row-major pixel index read at sequence position `t`.
fn permutation(dir: usize, h: usize, w: usize) -> Result<Vec<usize>> {
    let l = h * w;
    let base: Vec<usize> = match dir {
        0 | 1 => (0..l).collect(),
        2 | 3 => (0..l).map(|t| (t % h) * w + t / h).collect(),
        _ => {
            return Err(Error::config(format!(
                "scan direction {dir} (valid: 0..=3)"
            )))
        }
    };
    Ok(if dir % 2 == 1 {
        base.into_iter().rev().collect()
    } else {
        base
    })
}

/// Serializes `[B,C,H,W]` into `[B,C,H*W]` along scan order `dir`.
pub fn directional_reorder<T: Real>(x: &Tensor<T>, dir: usize) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = x.dims4("directional_reorder input")?;
    let perm = permutation(dir, h, w)?;
    let l = h * w;
    let xd = x.data();
    let mut y = vec![T::zero(); xd.len()];
    for i in 0..bsz * c {
        let src = &xd[i * l..(i + 1) * l];
        let dst = &mut y[i * l..(i + 1) * l];
        for (t, &p) in perm.iter().enumerate() {
            dst[t] = src[p];
        }
    }
    let out = Tensor::plain(vec![bsz, c, l], y);
    let need = x.requires_grad();
    let planes = bsz * c;
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let mut g = vec![T::zero(); dy.len()];
        for i in 0..planes {
            let src = &dy[i * l..(i + 1) * l];
            let dst = &mut g[i * l..(i + 1) * l];
            for (t, &p) in perm.iter().enumerate() {
                dst[p] = src[t];
            }
        }
        vec![Some(g)]
    })
}

/// Inverse of [`directional_reorder`]: `[B,C,H*W]` back to `[B,C,H,W]`.
pub fn directional_restore<T: Real>(
    x: &Tensor<T>,
    dir: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let (bsz, c, l) = x.dims3("directional_restore input")?;
    if l != h * w {
        return Err(Error::shape(format!(
            "directional_restore: length {l} is not {h}x{w}"
        )));
    }
    let perm = permutation(dir, h, w)?;
    let xd = x.data();
    let mut y = vec![T::zero(); xd.len()];
    for i in 0..bsz * c {
        let src = &xd[i * l..(i + 1) * l];
        let dst = &mut y[i * l..(i + 1) * l];
        for (t, &p) in perm.iter().enumerate() {
            dst[p] = src[t];
        }
    }
    let out = Tensor::plain(vec![bsz, c, h, w], y);
    let need = x.requires_grad();
    let planes = bsz * c;
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let mut g = vec![T::zero(); dy.len()];
        for i in 0..planes {
            let src = &dy[i * l..(i + 1) * l];
            let dst = &mut g[i * l..(i + 1) * l];
            for (t, &p) in perm.iter().enumerate() {
                dst[t] = src[p];
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
    fn two_by_two_definitional_orders() {
        // [[a,b],[c,d]] with a=0, b=1, c=2, d=3.
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0f32, 1.0, 2.0, 3.0]).unwrap();
        let want = [
            vec![0.0f32, 1.0, 2.0, 3.0], // dir 0: a b c d
            vec![3.0, 2.0, 1.0, 0.0],    // dir 1: d c b a
            vec![0.0, 2.0, 1.0, 3.0],    // dir 2: a c b d
            vec![3.0, 1.0, 2.0, 0.0],    // dir 3: d b c a
        ];
        for dir in 0..4 {
            let y = directional_reorder(&x, dir).unwrap();
            assert_eq!(y.shape(), &[1, 1, 4]);
            assert_eq!(y.data(), &want[dir][..], "dir {dir}");
        }
    }

    #[test]
    fn round_trips_are_bitwise_for_every_direction() {
        let mut rng = seeded(61);
        let x = Tensor::from_vec(&[2, 3, 3, 5], uniform::<f32>(&mut rng, 90, -4.0, 4.0)).unwrap();
        for dir in 0..NUM_DIRECTIONS {
            let seq = directional_reorder(&x, dir).unwrap();
            let back = directional_restore(&seq, dir, 3, 5).unwrap();
            assert_eq!(back.shape(), x.shape());
            assert_eq!(back.data(), x.data(), "dir {dir}");
        }
    }

    #[test]
    fn invalid_direction_is_a_config_error() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0f32; 4]).unwrap();
        assert!(matches!(
            directional_reorder(&x, 4),
            Err(Error::Config(_))
        ));
        let seq = Tensor::from_vec(&[1, 1, 4], vec![0.0f32; 4]).unwrap();
        assert!(matches!(
            directional_restore(&seq, 9, 2, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gradients_invert_the_permutation() {
        use crate::tensor::grad_check;
        let mut rng = seeded(62);
        let x = Tensor::from_vec(&[1, 2, 2, 3], uniform::<f64>(&mut rng, 12, -1.0, 1.0)).unwrap();
        let probe = Tensor::from_vec(&[1, 2, 6], uniform::<f64>(&mut rng, 12, -1.0, 1.0)).unwrap();
        for dir in 0..NUM_DIRECTIONS {
            let probe = probe.clone();
            let err = grad_check(
                |xs| directional_reorder(&xs[0], dir)?.mul(&probe)?.sum(),
                &[x.clone()],
            )
            .unwrap();
            assert!(err < 1e-9, "dir {dir} err {err}");
        }
    }
}
