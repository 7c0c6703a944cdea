mod common;

use std::f64::consts::{PI, TAU};

use impact_kam::fourier::{
    cohomological_residual, golden_mean, grid, solve_cohomological, CohomologicalOptions, FourierError,
    PeriodicFn,
};
use proptest::prelude::*;

fn trig<'a>(a0: f64, cos: &'a [f64], sin: &'a [f64]) -> impl Fn(f64) -> f64 + 'a {
    move |t| {
        let mut v = a0;
        for (k, (a, b)) in cos.iter().zip(sin).enumerate() {
            let w = (k + 1) as f64 * t;
            v += a * w.cos() + b * w.sin();
        }
        v
    }
}

fn coeffs() -> impl Strategy<Value = (f64, Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            -2.0f64..2.0,
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_matches_direct_sum((a0, c, s) in coeffs(), t in -10.0f64..10.0) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 16);
        prop_assert!((f.eval(t) - trig(a0, &c, &s)(t)).abs() < 1e-12);
    }

    #[test]
    fn samples_round_trip((a0, c, s) in coeffs()) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 16);
        let back = PeriodicFn::from_samples(&f.samples(64), 16);
        prop_assert!(back.max_coeff_diff(&f) < 1e-14);
    }

    #[test]
    fn derivative_matches_difference_quotient((a0, c, s) in coeffs(), t in 0.0..TAU) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 16);
        let h = 1e-5;
        let fd = (f.eval(t + h) - f.eval(t - h)) / (2.0 * h);
        prop_assert!((f.derivative().eval(t) - fd).abs() < 1e-7);
    }

    #[test]
    fn antiderivative_inverts_derivative((a0, c, s) in coeffs()) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 16);
        let g = f.without_average();
        prop_assert!(g.antiderivative().derivative().max_coeff_diff(&g) < 1e-14);
        prop_assert!(g.antiderivative().average().abs() < 1e-15);
    }

    #[test]
    fn product_is_pointwise((a0, c, s) in coeffs(), (b0, d, e) in coeffs(), t in 0.0..TAU) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 8);
        let g = PeriodicFn::from_cos_sin(b0, &d, &e, 8);
        let fg = f.product(&g, 16);
        prop_assert!((fg.eval(t) - f.eval(t) * g.eval(t)).abs() < 1e-12);
    }

    #[test]
    fn shift_translates((a0, c, s) in coeffs(), w in -5.0f64..5.0, t in 0.0..TAU) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 16);
        prop_assert!((f.shift(w).eval(t) - f.eval(t + w)).abs() < 1e-12);
    }

    #[test]
    fn cohomological_solution_solves((_, c, s) in coeffs(), k in 0i64..5) {
        let omega = TAU * golden_mean() + TAU * k as f64;
        let g = PeriodicFn::from_cos_sin(0.0, &c, &s, 16);
        let f = solve_cohomological(&g, omega, &CohomologicalOptions::default()).unwrap();
        prop_assert!(cohomological_residual(&f, &g, omega, 64) < 1e-12);
        prop_assert!(f.average().abs() < 1e-15);
    }

    #[test]
    fn strip_norm_dominates_real_sup((a0, c, s) in coeffs()) {
        let f = PeriodicFn::from_cos_sin(a0, &c, &s, 16);
        prop_assert!(f.strip_norm(0.25).value >= f.grid_sup(256) - 1e-12);
    }
}

#[test]
fn cosine_strip_norm() {
    let f = PeriodicFn::cos_mode(1, 4);
    assert!((f.strip_norm(0.25).value - 0.25f64.cosh()).abs() < 0.25f64.sinh() + 1e-12);
    assert!(f.strip_norm(0.25).value >= 0.25f64.cosh() - 1e-12);
}

#[test]
fn cohomological_closed_form() {
    // f(θ+ω) - f(θ) = cos θ has f = sin(θ - ω/2) / (2 sin(ω/2)).
    let omega = 1.3;
    let g = PeriodicFn::cos_mode(1, 8);
    let f = solve_cohomological(&g, omega, &CohomologicalOptions::default()).unwrap();
    for t in grid(17) {
        let want = (t - omega / 2.0).sin() / (2.0 * (omega / 2.0).sin());
        assert!((f.eval(t) - want).abs() < 1e-14);
    }
}

#[test]
fn cohomological_half_turn() {
    let f = solve_cohomological(&PeriodicFn::cos_mode(1, 8), PI, &CohomologicalOptions::default()).unwrap();
    assert!((f.eval(0.0) + 0.5).abs() < 1e-14);
}

#[test]
fn cohomological_rejects_average_and_resonance() {
    let opts = CohomologicalOptions::default();
    let g = PeriodicFn::constant(1.0, 4);
    assert!(matches!(
        solve_cohomological(&g, 1.0, &opts),
        Err(FourierError::NonzeroAverage { .. })
    ));
    let g = PeriodicFn::cos_mode(3, 8);
    match solve_cohomological(&g, TAU / 3.0, &opts) {
        Err(FourierError::SmallDivisorBreakdown { k, .. }) => assert_eq!(k, 3),
        other => panic!("expected breakdown, got {other:?}"),
    }
}

#[test]
fn decay_rate_of_analytic_function() {
    // Coefficients of 1/(1 - r cos θ) decay like e^{-k acosh(1/r)}.
    let r: f64 = 0.5;
    let f = PeriodicFn::from_samples(
        &grid(256).iter().map(|t| 1.0 / (1.0 - r * t.cos())).collect::<Vec<_>>(),
        64,
    );
    let rate = f.fitted_decay_rate(1e-14).unwrap();
    assert!((rate - (1.0 / r).acosh()).abs() < 0.05, "rate {rate}");
}
