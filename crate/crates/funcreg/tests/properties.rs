//! Property-based invariants over randomized inputs.

use funcreg::analysis::scalar_quantile;
use funcreg::posteriors::simplex_transform;
use proptest::prelude::*;

proptest! {
    /// Any unconstrained vector maps to a strictly positive probability
    /// vector summing to one.
    #[test]
    fn simplex_transform_is_valid(raw in proptest::collection::vec(-20.0f64..20.0, 1..12)) {
        let (c, _, _) = simplex_transform(&raw);
        prop_assert_eq!(c.len(), raw.len() + 1);
        for &v in c.iter() {
            prop_assert!(v > 0.0, "non-positive weight {}", v);
        }
        let sum: f64 = c.sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "weights sum to {}", sum);
    }

    /// Quantiles stay inside the sample range and are monotone in the
    /// probability level.
    #[test]
    fn quantiles_are_monotone_and_bounded(
        values in proptest::collection::vec(-1e6f64..1e6, 2..40),
        p1 in 0.0f64..1.0,
        p2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let qlo = scalar_quantile(&values, lo).unwrap();
        let qhi = scalar_quantile(&values, hi).unwrap();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(qlo <= qhi, "quantiles not monotone: {} > {}", qlo, qhi);
        prop_assert!(qlo >= min && qhi <= max, "quantiles escape the range");
    }
}
