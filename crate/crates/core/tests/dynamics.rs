mod common;

use std::f64::consts::TAU;

use common::{dopri5, oracle_impact_time, Forcing};
use impact_kam::dynamics::{
    det, DynamicsError, ForcingSpec, ImpactPoint, JacobianMode, MapKind, Oscillator, PhasePoint, RootMethod,
    ScaledMapSpec, Side,
};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn osc(eps: f64) -> Oscillator {
    Oscillator::new(ForcingSpec::cosine(), eps).unwrap()
}

fn mixed_forcing() -> (ForcingSpec, Forcing) {
    let (a0, cos, sin) = (0.3, vec![1.0, 0.0, 0.25], vec![0.5, -0.2]);
    (
        ForcingSpec::new(a0, cos.clone(), sin.clone(), 0.25).unwrap(),
        Forcing { a0, cos, sin },
    )
}

#[test]
fn flows_match_ode_oracle() {
    let (spec, oracle) = mixed_forcing();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let eps = rng.random_range(0.0..0.05);
        let o = Oscillator::new(spec.clone(), eps).unwrap();
        let p = PhasePoint::new(
            rng.random_range(0.0..TAU),
            rng.random_range(-2.0..2.0),
            rng.random_range(-10.0..10.0),
        );
        let tau = rng.random_range(0.0..8.0);
        for (side, s) in [(Side::Right, 1.0), (Side::Left, -1.0)] {
            let got = o.flow(side, p, tau);
            let (x, y) = dopri5(&oracle, eps, s, p.t, p.x, p.y, tau, 1e-14);
            assert!((got.x - x).abs() < 1e-10, "x {} vs {x}", got.x);
            assert!((got.y - y).abs() < 1e-10, "y {} vs {y}", got.y);
            assert_eq!(got.t, p.t + tau);
        }
    }
}

#[test]
fn impact_times_match_ode_event() {
    let (spec, oracle) = mixed_forcing();
    let o = Oscillator::new(spec, 0.02).unwrap();
    for (t, y) in [(0.3, 6.0), (2.0, 9.5), (5.1, 14.0)] {
        let want = oracle_impact_time(&oracle, 0.02, 1.0, t, y);
        for m in [RootMethod::Newton, RootMethod::FixedPoint] {
            let got = o.impact_time_plus(t, y, m).unwrap().tau;
            assert!((got - want).abs() < 1e-9, "{m:?}: {got} vs {want}");
        }
        let want = oracle_impact_time(&oracle, 0.02, -1.0, t, -y);
        let got = o.impact_time_minus(t, -y, RootMethod::Newton).unwrap().tau;
        assert!((got - want).abs() < 1e-9);
    }
}

#[test]
fn impact_map_lands_on_section_with_oracle_velocity() {
    let (spec, oracle) = mixed_forcing();
    let eps = 0.03;
    let o = Oscillator::new(spec, eps).unwrap();
    let q = ImpactPoint::new(1.2, 7.5);
    let out = o.impact_map(q).unwrap();
    let tau_p = out.t1 - q.t0;
    let (x1, y1) = dopri5(&oracle, eps, 1.0, q.t0, 0.0, q.y0, tau_p, 1e-14);
    assert!(x1.abs() < 1e-10);
    assert!((y1 - out.y1).abs() < 1e-10);
    let (x2, y2) = dopri5(&oracle, eps, -1.0, out.t1, 0.0, out.y1, out.t_bar - out.t1, 1e-14);
    assert!(x2.abs() < 1e-10);
    assert!((y2 - out.y_bar).abs() < 1e-10);
}

#[test]
fn unperturbed_map_is_pure_rotation() {
    let o = osc(0.0);
    for t in [0.0, 1.0, 4.0] {
        for y in [0.5, 3.0, 40.0] {
            let out = o.impact_map(ImpactPoint::new(t, y)).unwrap();
            assert!((out.t_bar - (t + 4.0 * y)).abs() < 1e-12);
            assert_eq!(out.y_bar, y);
            assert_eq!((out.f_t0, out.f_y0), (0.0, 0.0));
        }
    }
}

#[test]
fn half_maps_compose_to_full_map() {
    let o = osc(0.01);
    let q = ImpactPoint::new(0.7, 12.0);
    let (t1, y1) = o.half_map_plus(q).unwrap();
    let (t2, y2) = o.half_map_minus(t1, y1).unwrap();
    let full = o.impact_map(q).unwrap();
    assert!((t2 - full.t_bar).abs() < 1e-12);
    assert!((y2 - full.y_bar).abs() < 1e-12);
}

#[test]
fn decomposition_splits_tau() {
    let o = osc(0.01);
    for (t, y) in [(0.0, 6.0), (3.0, 20.0)] {
        let d = o.impact_time_plus(t, y, RootMethod::Newton).unwrap();
        assert!((d.tau - (d.tau0 + 0.01 * d.tau_star)).abs() < 1e-12 * d.tau);
        assert!(o.impact_residual(Side::Right, t, y, d.tau).abs() < 1e-11 * y * y);
    }
}

#[test]
fn twist_denominator() {
    let o = Oscillator::new(ForcingSpec::new(1.0, vec![1.0], vec![], 0.25).unwrap(), 0.1).unwrap();
    assert!((o.alpha(10.0) - 40.0 / 0.99).abs() < 1e-12);
    assert!((o.alpha_energy(-50.0) - 40.0 / 0.99).abs() < 1e-12);
}

#[test]
fn rejects_large_mean_forcing() {
    let spec = ForcingSpec::new(5.0, vec![], vec![], 0.25).unwrap();
    assert!(matches!(Oscillator::new(spec, 0.1), Err(DynamicsError::InvalidParameter(_))));
}

#[test]
fn grazing_is_reported() {
    let o = osc(0.01);
    assert!(matches!(
        o.impact_map(ImpactPoint::new(0.0, 1e-4)),
        Err(DynamicsError::Grazing { .. })
    ));
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    let o = osc(0.02);
    let spec = ScaledMapSpec::new(9.0, 0.02);
    let cases = [
        (MapKind::Impact, [0.4, 9.0]),
        (MapKind::ImpactEnergy, [2.5, -40.5]),
        (MapKind::Scaled(spec), [1.1, spec.i0_star() + 0.1]),
    ];
    for (kind, pt) in cases {
        let a = o.jacobian(kind, pt, JacobianMode::Analytic).unwrap();
        let f = o.jacobian(kind, pt, JacobianMode::FiniteDifference).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let scale = 1.0f64.max(a[i][j].abs());
                assert!((a[i][j] - f[i][j]).abs() < 1e-6 * scale, "{kind:?} [{i}][{j}] {} vs {}", a[i][j], f[i][j]);
            }
        }
    }
}

#[test]
fn scaled_map_round_trips_action() {
    let spec = ScaledMapSpec::new(12.0, 0.01);
    for y in [11.5, 12.0, 12.4] {
        assert!((spec.y_of_action(spec.action_of_y(y)) - y).abs() < 1e-12);
    }
    let o = osc(0.01);
    let far = spec.i0_star() + 2.0 * spec.action_radius;
    assert!(matches!(
        o.scaled_map(&spec, 0.0, far),
        Err(DynamicsError::DomainEscape { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_map_preserves_area(t in 0.0..TAU, y in 6.0f64..60.0, eps in 0.0f64..0.02) {
        let o = osc(eps);
        let j = o.jacobian(MapKind::ImpactEnergy, [t, -0.5 * y * y], JacobianMode::Analytic).unwrap();
        prop_assert!((det(&j) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn newton_and_fixed_point_agree(t in 0.0..TAU, y in 6.0f64..80.0) {
        let o = osc(0.01);
        let a = o.impact_time_plus(t, y, RootMethod::Newton).unwrap();
        let b = o.impact_time_plus(t, y, RootMethod::FixedPoint).unwrap();
        prop_assert!((a.tau - b.tau).abs() < 1e-10);
    }

    #[test]
    fn map_is_periodic_in_time(t in 0.0..TAU, y in 6.0f64..40.0) {
        let o = osc(0.02);
        let a = o.impact_map(ImpactPoint::new(t, y)).unwrap();
        let b = o.impact_map(ImpactPoint::new(t + TAU, y)).unwrap();
        prop_assert!((b.t_bar - a.t_bar - TAU).abs() < 1e-9);
        prop_assert!((b.y_bar - a.y_bar).abs() < 1e-9);
    }
}
