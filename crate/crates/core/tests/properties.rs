mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn weights_sum_to_one(v in positive_weights()) {
        weights_normalize(&v)?;
    }

    #[test]
    fn ess_in_range_and_scale_free(v in positive_weights(), s in 1e-6..1e6f64) {
        ess_bounds_and_scale(&v, s)?;
    }

    #[test]
    fn potentials_within_kernel_bounds(
        (s, xs, w, ys) in (0.2..1.0f64, prop::collection::vec(0.0..1.0f64, 1..40), prop::collection::vec(0.0..1.0f64, 1..40))
            .prop_flat_map(|(s, xs, ys)| {
                let n = xs.len();
                (Just(s), Just(xs), prop::collection::vec(0.01..1.0f64, n), Just(ys))
            })
    ) {
        potentials_bounded(s, xs, w, ys)?;
    }

    #[test]
    fn multinomial_counts_match_weights(w in prop::collection::vec(0.05..1.0f64, 2..12), seed in any::<u64>()) {
        resampling_unbiased(&w, seed)?;
    }

    #[test]
    fn em_keeps_mass_and_lowers_kl((b, d, f, h, s) in model_inputs()) {
        em_conserves_mass_and_descends(&random_model(b, d, f, h, s), 10)?;
    }

    #[test]
    fn smoothing_matrices_are_row_stochastic(b in 3usize..80, e in 0.0..0.5f64) {
        smoothing_rows_stochastic(b, e)?;
    }

    #[test]
    fn mixture_estimate_has_unit_mass(((c, w), bw) in (1usize..50, 0.005..0.3f64).prop_flat_map(|(n, bw)| (centers_weights(n), Just(bw)))) {
        mixture_integrates_to_one(c, w, bw)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn same_seed_same_bits(seed in any::<u64>(), n in 20usize..120) {
        seed_determinism(seed, n)?;
    }
}
