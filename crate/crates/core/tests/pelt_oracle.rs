mod support;

use proptest::prelude::*;
use spacetime::changepoint::pelt::{pelt, PeltConfig, VAR_FLOOR};
use support::{exhaustive_segmentation, random_signal, segmentation_cost};

#[test]
fn pelt_matches_exhaustive_dp_on_random_signals() {
    for seed in 0..100 {
        let signal = random_signal(seed, 300, 3);
        let min_segment = 2 + (seed as usize % 14);
        let cfg = PeltConfig::new(min_segment);
        let beta = cfg.penalty_for(&signal);
        let got = pelt(&signal, &cfg).unwrap();
        let (want, _) = exhaustive_segmentation(&signal, beta, min_segment, VAR_FLOOR);
        assert_eq!(
            got,
            want,
            "seed {seed}, n {}, d {min_segment}",
            signal.n_time()
        );
    }
}

#[test]
fn small_penalty_still_matches_dp() {
    for seed in 100..130 {
        let signal = random_signal(seed, 120, 2);
        let cfg = PeltConfig {
            penalty: Some(2.0 + seed as f64 % 5.0),
            min_segment: 5,
        };
        let got = pelt(&signal, &cfg).unwrap();
        let (want, _) = exhaustive_segmentation(&signal, cfg.penalty.unwrap(), 5, VAR_FLOOR);
        assert_eq!(got, want, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn changepoints_respect_min_segment(seed in 0u64..10_000, d in 2usize..20) {
        let signal = random_signal(seed, 200, 3);
        let cps = pelt(&signal, &PeltConfig::new(d)).unwrap();
        let mut bounds = vec![0];
        bounds.extend(&cps);
        bounds.push(signal.n_time());
        for w in bounds.windows(2) {
            prop_assert!(w[1] - w[0] >= d, "{:?} violates d={}", cps, d);
        }
    }

    #[test]
    fn pelt_is_never_worse_than_no_split(seed in 0u64..10_000) {
        let signal = random_signal(seed, 150, 2);
        let cfg = PeltConfig::new(4);
        let beta = cfg.penalty_for(&signal);
        let cps = pelt(&signal, &cfg).unwrap();
        let got = segmentation_cost(&signal, &cps, beta, VAR_FLOOR);
        let whole = segmentation_cost(&signal, &[], beta, VAR_FLOOR);
        prop_assert!(got <= whole + 1e-9);
    }
}
