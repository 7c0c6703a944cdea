mod common;

use std::f64::consts::TAU;

use common::brute_margin;
use impact_kam::fourier::golden_mean;
use impact_kam::maps::{AffineTwist, StandardMap};
use impact_kam::rotation::{diophantine_margin, frequency_ladder, rotation_number, FrequencySpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn convergent_scan_matches_brute_force(x in 0.001f64..0.999, nu in 1.0f64..3.0) {
        let q_max = 2000;
        let fast = diophantine_margin(TAU * x, nu, q_max);
        let (g, _) = brute_margin(TAU * x, nu, q_max);
        prop_assert!((fast.gamma_best - g).abs() <= 1e-9 * g.max(1e-300) + 1e-15,
            "fast {} brute {g}", fast.gamma_best);
    }
}

#[test]
fn golden_mean_margin_is_stable_across_ladder() {
    for k in 0..10 {
        let omega = TAU * (golden_mean() + k as f64);
        let m = diophantine_margin(omega, 2.0, 100_000);
        let (g, q) = brute_margin(omega, 2.0, 100_000);
        assert!((m.gamma_best - g).abs() < 1e-9);
        assert_eq!(m.worst_q, q);
    }
}

#[test]
fn frequency_spec_holds() {
    let good = FrequencySpec {
        omega: TAU * golden_mean(),
        gamma: 0.38,
        nu: 2.0,
        q_max: 10_000,
    };
    assert!(good.holds());
    let near = FrequencySpec {
        omega: TAU * (0.5 + 1e-9),
        ..good
    };
    assert!(!near.holds());
}

#[test]
fn twist_rotation_number_tracks_action() {
    let m = AffineTwist {
        alpha0: 0.5,
        slope: 1.5,
    };
    let r = rotation_number(&m, [0.0, 0.2], 4000).unwrap();
    assert!((r.value - 0.8).abs() < 1e-12);
}

#[test]
fn weighted_average_beats_plain_average() {
    // A quasi-periodic orbit of the standard map on a KAM circle.
    let m = StandardMap { k: 0.3 };
    let r = rotation_number(&m, [0.0, TAU * golden_mean()], 20_000).unwrap();
    assert!(r.error_estimate < 1e-10, "err {}", r.error_estimate);
    let r2 = rotation_number(&m, [0.0, TAU * golden_mean()], 40_000).unwrap();
    assert!((r.value - r2.value).abs() < 1e-10);
    assert!((r.value - r.plain_average).abs() < 1e-3);
}

#[test]
fn ladder_filters_low_rungs() {
    let l = frequency_ladder(0.01, 0.0, TAU * golden_mean(), 0..=9);
    assert!(l.rungs.iter().all(|r| r.y0_star > 5.0));
    assert_eq!(l.rungs.first().map(|r| r.k), Some(3));
    assert_eq!(l.filtered.len(), 3);
    for r in &l.rungs {
        assert!((r.omega - TAU * (golden_mean() + r.k as f64)).abs() < 1e-12);
    }
}
