//! Property-based round trips: randomized shapes and values through the
//! reorderings and the tensor file format, plus invariants of the head
//! chooser and the learning-rate schedule.

use proptest::prelude::*;

use segscan::model::heads_for;
use segscan::nn::{pixel_shuffle, pixel_unshuffle};
use segscan::ssm::{directional_reorder, directional_restore, NUM_DIRECTIONS};
use segscan::tensor::{smt1, Tensor};
use segscan::train::lr_at;

proptest! {
    #[test]
    fn pixel_shuffle_round_trips(
        r in 1..=3usize,
        c in 1..=4usize,
        hb in 1..=4usize,
        wb in 1..=4usize,
        seed in any::<u64>(),
    ) {
        let (h, w) = (r * hb, r * wb);
        let data = segscan::init::uniform(&mut segscan::init::seeded(seed), c * h * w, -5.0, 5.0);
        let x = Tensor::<f64>::from_vec(&[1, c, h, w], data).unwrap();
        let down = pixel_unshuffle(&x, r).unwrap();
        prop_assert_eq!(down.shape(), &[1, c * r * r, hb, wb]);
        let back = pixel_shuffle(&down, r).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn directional_reorders_restore_bitwise(
        c in 1..=3usize,
        h in 1..=6usize,
        w in 1..=6usize,
        dir in 0..NUM_DIRECTIONS,
        seed in any::<u64>(),
    ) {
        let data = segscan::init::uniform(&mut segscan::init::seeded(seed), c * h * w, -9.0, 9.0);
        let x = Tensor::<f64>::from_vec(&[1, c, h, w], data).unwrap();
        let seq = directional_reorder(&x, dir).unwrap();
        prop_assert_eq!(seq.shape(), &[1, c, h * w]);
        let back = directional_restore(&seq, dir, h, w).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn tensor_format_round_trips(
        dims in proptest::collection::vec(1..=5usize, 1..=4),
        seed in any::<u64>(),
        wide in any::<bool>(),
    ) {
        let n: usize = dims.iter().product();
        if wide {
            let data = segscan::init::uniform(&mut segscan::init::seeded(seed), n, -1e6, 1e6);
            let t = Tensor::<f64>::from_vec(&dims, data).unwrap();
            let back = smt1::decode::<f64>(&smt1::encode(&t).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(back.data(), t.data());
        } else {
            let data = segscan::init::uniform(&mut segscan::init::seeded(seed), n, -1e6, 1e6);
            let t = Tensor::<f32>::from_vec(&dims, data).unwrap();
            let back = smt1::decode::<f32>(&smt1::encode(&t).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(back.data(), t.data());
        }
    }

    #[test]
    fn head_count_divides_and_minimizes_width_error(c in 1..=512usize) {
        let h = heads_for(c);
        prop_assert!(h >= 1 && c % h == 0);
        let err = |heads: usize| ((c / heads) as f64 - 32.0).abs();
        for candidate in 1..=c {
            if c % candidate == 0 {
                // No divisor beats the chosen head count, and ties go small.
                prop_assert!(
                    err(h) < err(candidate) + 1e-9 || h <= candidate,
                    "heads {} loses to {} at width {}", h, candidate, c
                );
            }
        }
    }

    #[test]
    fn schedule_stays_positive_and_bounded(
        steps in 1..=1000usize,
        base_milli in 1..=100u32,
    ) {
        let base = base_milli as f64 * 1e-3;
        for s in 0..steps {
            let lr = lr_at(s, steps, base);
            prop_assert!(lr > 0.0 && lr <= base + 1e-15, "lr {} at step {}/{}", lr, s, steps);
        }
    }
}
