//! Property tests for the numeric primitives.

use proptest::prelude::*;
use tsc_nn::{floor_distribution, kl_divergence, softmax, KL_FLOOR};

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        logits in proptest::collection::vec(-20.0f64..20.0, 2..8),
        shift in -50.0f64..50.0,
    ) {
        let base = softmax(&logits).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let moved = softmax(&shifted).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_with_positive_entries(
        logits in proptest::collection::vec(-30.0f64..30.0, 1..10),
    ) {
        let p = softmax(&logits).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_on_equal(
        raw_p in proptest::collection::vec(0.01f64..1.0, 4),
        raw_q in proptest::collection::vec(0.01f64..1.0, 4),
    ) {
        let norm = |raw: &[f64]| {
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let p = floor_distribution(&norm(&raw_p), KL_FLOOR);
        let q = floor_distribution(&norm(&raw_q), KL_FLOOR);
        let (v, _) = kl_divergence(&p, &q).unwrap();
        prop_assert!(v >= 0.0);
        let (self_v, _) = kl_divergence(&p, &p).unwrap();
        prop_assert!(self_v.abs() < 1e-12);
    }
}
