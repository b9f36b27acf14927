//! Spatial pooling.

use crate::error::Result;
use crate::real::Real;
use crate::tensor::Tensor;

/// Per-channel spatial mean: `[B,C,H,W] -> [B,C,1,1]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (bsz, c, h, w) = x.dims4("global_avg_pool input")?;
    let plane = h * w;
    let inv = T::of(1.0 / plane as f64);
    let xd = x.data();
    let mut y = vec![T::zero(); bsz * c];
    for i in 0..bsz * c {
        let mut acc = T::zero();
        for s in 0..plane {
            acc = acc + xd[i * plane + s];
        }
        y[i] = acc * inv;
    }
    let out = Tensor::plain(vec![bsz, c, 1, 1], y);
    let need = x.requires_grad();
    Tensor::record(out, &[x], move |dy| {
        if !need {
            return vec![None];
        }
        let mut g = vec![T::zero(); bsz * c * plane];
        for i in 0..bsz * c {
            let d = dy[i] * inv;
            for s in 0..plane {
                g[i * plane + s] = d;
            }
        }
        vec![Some(g)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{seeded, uniform};
    use crate::tensor::grad_check;

    #[test]
    fn constants_and_hand_values() {
        let x = Tensor::from_vec(&[1, 2, 2, 2], vec![3.0f64; 8]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[3.0, 3.0]);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.5]);
    }

    #[test]
    fn matches_sum_oracle_on_random_input() {
        let mut rng = seeded(40);
        let x = Tensor::from_vec(&[2, 3, 5, 7], uniform::<f64>(&mut rng, 210, -2.0, 2.0)).unwrap();
        let y = global_avg_pool(&x).unwrap();
        for i in 0..6 {
            let want: f64 = x.data()[i * 35..(i + 1) * 35].iter().sum::<f64>() / 35.0;
            assert!((y.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_uniform() {
        let mut rng = seeded(41);
        let x = Tensor::from_vec(&[1, 2, 3, 3], uniform::<f64>(&mut rng, 18, -1.0, 1.0)).unwrap();
        let err = grad_check(
            |xs| global_avg_pool(&xs[0])?.mul_scalar(2.0)?.sum(),
            &[x],
        )
        .unwrap();
        assert!(err < 1e-9);
    }
}
