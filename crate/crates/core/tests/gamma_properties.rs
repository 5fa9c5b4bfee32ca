use adelfl::gamma::{poisson_cdf, poisson_pmf, regularized_upper_gamma};
use adelfl::quadrature::upper_gamma_integral;
use proptest::prelude::*;

fn q(s: u32, x: f64) -> f64 {
    regularized_upper_gamma(s, x).unwrap().value()
}

proptest! {
    #[test]
    fn value_is_a_probability(s in 1u32..=512, x in 0.0f64..2000.0) {
        let v = q(s, x);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn non_increasing_in_x(s in 1u32..=200, x in 0.0f64..300.0, dx in 0.0f64..10.0) {
        prop_assert!(q(s, x + dx) <= q(s, x) + 1e-15);
    }

    #[test]
    fn non_decreasing_in_s(s in 1u32..200, x in 0.0f64..300.0) {
        prop_assert!(q(s + 1, x) >= q(s, x) - 1e-15);
    }

    #[test]
    fn shape_recursion(s in 1u32..120, x in 0.01f64..150.0) {
        // Q(s+1, x) = Q(s, x) + x^s e^{-x} / s!
        let lhs = q(s + 1, x);
        let rhs = q(s, x) + poisson_pmf(s, x).unwrap().value();
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn cdf_is_partial_pmf_sum(k in 0u32..60, lambda in 0.01f64..40.0) {
        let direct: f64 = (0..=k).map(|j| poisson_pmf(j, lambda).unwrap().value()).sum();
        prop_assert!((poisson_cdf(k, lambda).unwrap().value() - direct).abs() <= 1e-12);
    }

    #[test]
    fn series_matches_tail_integral(s in 1u32..=40, x in 0.05f64..60.0) {
        prop_assert!((q(s, x) - upper_gamma_integral(s, x)).abs() <= 1e-10);
    }
}

#[test]
fn out_of_range_arguments_are_rejected() {
    assert!(regularized_upper_gamma(0, 1.0).is_err());
    assert!(regularized_upper_gamma(513, 1.0).is_err());
    assert!(regularized_upper_gamma(3, -1.0).is_err());
    assert!(regularized_upper_gamma(3, f64::NAN).is_err());
    assert!(poisson_cdf(2, 0.0).is_err());
}
