mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hamiltonian_concave_lipschitz_monotone(
        menu in menus(), w1 in -10.0f64..10.0, w2 in -10.0f64..10.0, lam in 0.0f64..=1.0
    ) {
        hamiltonian_case(&menu, w1, w2, lam)?;
    }

    #[test]
    fn w_increasing_in_gamma(w0 in -6.0f64..0.4, g in 0.0f64..2.5, d in 1e-3f64..0.5) {
        monotone_in_gamma_case(w0, g, d)?;
    }

    #[test]
    fn w_increasing_in_w0(w0 in -6.0f64..0.4, g in 0.0f64..2.5, d in 1e-3f64..0.5) {
        monotone_in_w0_case(w0, g, d)?;
    }

    #[test]
    fn shape_matches_initial_slope(w0 in -6.0f64..2.0, g in -2.0f64..3.0) {
        shape_case(w0, g)?;
    }

    #[test]
    fn f1_increasing_in_gamma(w0 in -6.0f64..0.45, o in -0.5f64..2.0, d in 1e-3f64..0.5) {
        f1_monotone_case(w0, o, d)?;
    }

    #[test]
    fn f2_increasing_in_gamma(w0 in -10.0f64..-0.6, o in 1e-3f64..2.0, d in 1e-3f64..1.0) {
        f2_monotone_gamma_case(w0, o, d)?;
    }

    #[test]
    fn f2_increasing_in_w0(w0 in -10.0f64..-1.0, d in 1e-2f64..0.4, o in 1e-3f64..2.0) {
        f2_monotone_w0_case(w0, d, o)?;
    }

    #[test]
    fn gamma1_star_decreasing(w0 in -6.0f64..0.3, d in 0.02f64..0.15) {
        gamma1_decreasing_case(w0, d)?;
    }

    #[test]
    fn gamma2_star_decreasing(w0 in -12.0f64..-4.2, d in 0.02f64..0.2) {
        gamma2_decreasing_case(w0, d)?;
    }
}
