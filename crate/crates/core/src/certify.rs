//! Numerical audits of the impact map and the confinement experiment.

use std::f64::consts::TAU;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{
    det, DynamicsError, ImpactPoint, JacobianMode, MapKind, Oscillator, ScaledMapSpec,
};
use crate::fourier::{grid, principal_angle, PeriodicFn};
use crate::kam::{initial_circle, solve_curve, CurveParametrization, KamFailure, KamOptions, KamReport};
use crate::maps::ScaledImpactMap;
use crate::rotation::LadderRung;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("curves overlap at t = {t}: inner y = {inner}, outer y = {outer}")]
    OverlappingCurves { t: f64, inner: f64, outer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymplecticReport {
    /// `max |det DF - 1|` over the grid.
    pub max_defect: f64,
    pub worst_point: [f64; 2],
}

/// Largest determinant defect of the analytic Jacobian over `points`.
pub fn check_symplectic(
    osc: &Oscillator,
    map: MapKind,
    points: &[[f64; 2]],
) -> Result<SymplecticReport, DynamicsError> {
    let mut report = SymplecticReport {
        max_defect: 0.0,
        worst_point: points.first().copied().unwrap_or([0.0; 2]),
    };
    for &p in points {
        let d = (det(&osc.jacobian(map, p, JacobianMode::Analytic)?) - 1.0).abs();
        if d > report.max_defect {
            report = SymplecticReport {
                max_defect: d,
                worst_point: p,
            };
        }
    }
    Ok(report)
}

/// Which action variable the loop functional uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactnessForm {
    /// `∮ (Ē ∂t̄ - E₀) dt₀` on `E₀ = level`.
    Energy,
    /// `∮ (ȳ ∂t̄ - y₀) dt₀` on `y₀ = level`.
    Velocity,
}

/// Trapezoidal (spectrally accurate) loop integral of the pulled-back
/// 1-form minus the original one over the circle `action = level`.
pub fn check_exactness(
    osc: &Oscillator,
    form: ExactnessForm,
    level: f64,
    n_quad: usize,
) -> Result<f64, DynamicsError> {
    let y0 = match form {
        ExactnessForm::Energy => (-2.0 * level).sqrt(),
        ExactnessForm::Velocity => level,
    };
    let mut sum = 0.0;
    for t0 in grid(n_quad) {
        let out = osc.impact_map(ImpactPoint::new(t0, y0))?;
        let dt = osc.jacobian(MapKind::Impact, [t0, y0], JacobianMode::Analytic)?[0][0];
        sum += match form {
            ExactnessForm::Energy => -0.5 * out.y_bar * out.y_bar * dt - level,
            ExactnessForm::Velocity => out.y_bar * dt - level,
        };
    }
    Ok((TAU * sum / n_quad as f64).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauStarReport {
    /// `max |τ*₊| |y₀| / (32 p̃)`.
    pub worst_ratio: f64,
    pub worst_point: [f64; 2],
    /// `(y₀, max_t |τ*₊|)` per velocity.
    pub profile: Vec<(f64, f64)>,
    /// Least-squares slope of `ln max|τ*₊|` against `ln y₀`.
    pub fitted_exponent: Option<f64>,
}

pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn check_tau_star_bounds(
    osc: &Oscillator,
    y_grid: &[f64],
    t_grid: &[f64],
) -> Result<TauStarReport, CertifyError> {
    if let Some(y) = y_grid.iter().find(|&&y| !(y > 5.0)) {
        return Err(CertifyError::InvalidParameter(format!(
            "velocity grid must lie above 5, got {y}"
        )));
    }
    let scale = 32.0 * osc.forcing().p_tilde();
    let mut worst = (0.0, [0.0; 2]);
    let mut profile = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let mut peak = 0.0_f64;
        for &t in t_grid {
            let s = osc.impact_time_plus(t, y, osc.method())?.tau_star.abs();
            peak = peak.max(s);
            let r = s * y / scale;
            if r > worst.0 {
                worst = (r, [t, y]);
            }
        }
        profile.push((y, peak));
    }
    let fitted_exponent = log_log_slope(&profile);
    Ok(TauStarReport {
        worst_ratio: worst.0,
        worst_point: worst.1,
        profile,
        fitted_exponent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationLevel {
    /// Lower edge `Y` of the shell `[Y, 2Y]`.
    pub y0: f64,
    pub max_f_t0: f64,
    pub max_f_y0: f64,
    pub max_dy_f_t0: f64,
}

/// Sup of `|f_t|`, `|f_y|` and `|∂_y f_t|` over the shells `[Y, 2Y] × [0, 2π)`.
/// Taking the sup over a shell rather than a single `y₀` removes the
/// `|sin 2y₀|`-type modulation that the forcing phase imprints on pointwise
/// maxima.
pub fn perturbation_profile(
    osc: &Oscillator,
    levels: &[f64],
    n_t: usize,
    n_y: usize,
) -> Result<Vec<PerturbationLevel>, DynamicsError> {
    let eps = osc.epsilon();
    if eps == 0.0 {
        return Ok(levels
            .iter()
            .map(|&y0| PerturbationLevel {
                y0,
                max_f_t0: 0.0,
                max_f_y0: 0.0,
                max_dy_f_t0: 0.0,
            })
            .collect());
    }
    let d_alpha = osc.alpha(1.0);
    let ts = grid(n_t);
    levels
        .iter()
        .map(|&level| {
            let mut out = PerturbationLevel {
                y0: level,
                max_f_t0: 0.0,
                max_f_y0: 0.0,
                max_dy_f_t0: 0.0,
            };
            for i in 0..n_y {
                let y = level * (1.0 + i as f64 / (n_y.max(2) - 1) as f64);
                for &t in &ts {
                    let m = osc.impact_map(ImpactPoint::new(t, y))?;
                    let j = osc.jacobian(MapKind::Impact, [t, y], JacobianMode::Analytic)?;
                    out.max_f_t0 = out.max_f_t0.max(m.f_t0.abs());
                    out.max_f_y0 = out.max_f_y0.max(m.f_y0.abs());
                    out.max_dy_f_t0 = out.max_dy_f_t0.max(((j[0][1] - d_alpha) / eps).abs());
                }
            }
            Ok(out)
        })
        .collect()
}

/// An invariant circle of the scaled map viewed in `(t₀, y₀)`:
/// `t = θ + φ_φ(θ)`, `y = √(-√2 y₀* φ_I(θ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionCurve {
    pub phi_part: PeriodicFn,
    pub i_part: PeriodicFn,
    pub y0_star: f64,
    dphi: PeriodicFn,
}

impl SectionCurve {
    /// Drops coefficients below `1e-16` to keep evaluation cheap.
    pub fn from_scaled(curve: &CurveParametrization, spec: &ScaledMapSpec) -> Self {
        let phi_part = curve.phi_part.trimmed(1e-16);
        let i_part = curve.i_part.trimmed(1e-16);
        let dphi = phi_part.derivative();
        Self {
            phi_part,
            i_part,
            y0_star: spec.y0_star,
            dphi,
        }
    }

    /// The horizontal circle `y₀ = y`.
    pub fn flat(y: f64) -> Self {
        let spec = ScaledMapSpec::new(y, 0.0);
        Self::from_scaled(&CurveParametrization::flat(spec.i0_star(), 0.0, 1), &spec)
    }

    /// Parameter `θ` with `θ + φ_φ(θ) ≡ t (mod 2π)`.
    pub fn theta_at(&self, t: f64) -> f64 {
        let mut th = t - self.phi_part.average();
        for _ in 0..50 {
            let g = principal_angle(th + self.phi_part.eval(th) - t);
            let step = g / (1.0 + self.dphi.eval(th));
            th -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        th
    }

    pub fn y_at_theta(&self, theta: f64) -> f64 {
        (-std::f64::consts::SQRT_2 * self.y0_star * self.i_part.eval(theta)).sqrt()
    }

    /// Curve velocity at section time `t`.
    pub fn y_at(&self, t: f64) -> f64 {
        self.y_at_theta(self.theta_at(t))
    }

    pub fn point(&self, theta: f64) -> [f64; 2] {
        [theta + self.phi_part.eval(theta), self.y_at_theta(theta)]
    }

    /// `(min y, max y)` over `m` samples.
    pub fn y_range(&self, m: usize) -> (f64, f64) {
        grid(m)
            .into_iter()
            .map(|th| self.y_at_theta(th))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)))
    }

    /// `max |ȳ - y_curve(t̄)|` over `m` curve points: how far the image of
    /// the curve lies from the curve itself.
    pub fn invariance_defect(&self, osc: &Oscillator, m: usize) -> Result<f64, DynamicsError> {
        let mut worst = 0.0_f64;
        for th in grid(m) {
            let [t, y] = self.point(th);
            let out = osc.impact_map(ImpactPoint::new(t, y))?;
            worst = worst.max((out.y_bar - self.y_at(out.t_bar.rem_euclid(TAU))).abs());
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub index: usize,
    pub t0: f64,
    pub y0: f64,
    pub impacts_survived: usize,
    pub min_y: f64,
    pub max_y: f64,
    pub breached: bool,
    /// Set when the impact map itself failed; the trial stops there.
    pub escape: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfinementReport {
    pub seed: u64,
    pub epsilon: f64,
    pub n_trials: usize,
    pub n_impacts: usize,
    pub inner_y_range: (f64, f64),
    pub outer_y_range: (f64, f64),
    pub breaches: usize,
    pub escapes: usize,
    pub trials: Vec<Trial>,
    #[serde(skip)]
    pub inner_curve: Option<SectionCurve>,
    #[serde(skip)]
    pub outer_curve: Option<SectionCurve>,
}

fn run_trial(
    osc: &Oscillator,
    inner: &SectionCurve,
    outer: &SectionCurve,
    index: usize,
    start: (f64, f64),
    n_impacts: usize,
) -> Trial {
    let (mut t, mut y) = start;
    let mut trial = Trial {
        index,
        t0: t,
        y0: y,
        impacts_survived: 0,
        min_y: y,
        max_y: y,
        breached: false,
        escape: None,
    };
    for _ in 0..n_impacts {
        match osc.impact_map(ImpactPoint::new(t, y)) {
            Ok(out) => {
                t = out.t_bar.rem_euclid(TAU);
                y = out.y_bar;
            }
            Err(e) => {
                trial.escape = Some(e.to_string());
                break;
            }
        }
        trial.min_y = trial.min_y.min(y);
        trial.max_y = trial.max_y.max(y);
        if !(inner.y_at(t) < y && y < outer.y_at(t)) {
            trial.breached = true;
            break;
        }
        trial.impacts_survived += 1;
    }
    trial
}

/// Iterates the impact map from `n_trials` seeded points strictly between
/// `inner` and `outer` and records every exit from the band.
pub fn confinement_run(
    osc: &Oscillator,
    inner: &SectionCurve,
    outer: &SectionCurve,
    n_trials: usize,
    n_impacts: usize,
    seed: u64,
) -> Result<ConfinementReport, CertifyError> {
    for t in grid(512) {
        let (lo, hi) = (inner.y_at(t), outer.y_at(t));
        if !(lo < hi) {
            return Err(CertifyError::OverlappingCurves {
                t,
                inner: lo,
                outer: hi,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(f64, f64)> = (0..n_trials)
        .map(|_| {
            let t: f64 = rng.random_range(0.0..TAU);
            let mut u: f64 = rng.random_range(0.0..1.0);
            if u == 0.0 {
                u = 0.5;
            }
            let (lo, hi) = (inner.y_at(t), outer.y_at(t));
            (t, lo + u * (hi - lo))
        })
        .collect();
    let trials: Vec<Trial> = starts
        .par_iter()
        .enumerate()
        .map(|(i, &s)| run_trial(osc, inner, outer, i, s, n_impacts))
        .collect();
    Ok(ConfinementReport {
        seed,
        epsilon: osc.epsilon(),
        n_trials,
        n_impacts,
        inner_y_range: inner.y_range(256),
        outer_y_range: outer.y_range(256),
        breaches: trials.iter().filter(|t| t.breached).count(),
        escapes: trials.iter().filter(|t| t.escape.is_some()).count(),
        trials,
        inner_curve: Some(inner.clone()),
        outer_curve: Some(outer.clone()),
    })
}

/// A converged ladder curve together with its map and report.
#[derive(Debug, Clone)]
pub struct LadderCurve {
    pub rung: LadderRung,
    pub map: ScaledImpactMap,
    pub curve: CurveParametrization,
    pub report: KamReport,
}

impl LadderCurve {
    pub fn section_curve(&self) -> SectionCurve {
        SectionCurve::from_scaled(&self.curve, &self.map.spec)
    }
}

/// Solves for the invariant circle with rotation `ω_k` of the scaled map
/// localized at `y₀*_k`, starting from the flat circle.
#[allow(clippy::result_large_err)]
pub fn ladder_curve(
    osc: &Oscillator,
    rung: LadderRung,
    order: usize,
    opts: &KamOptions,
) -> Result<LadderCurve, KamFailure> {
    let map = ScaledImpactMap::new(osc.clone(), rung.y0_star);
    let init = initial_circle(&map, rung.omega, order).map_err(|error| KamFailure {
        error,
        report: KamReport::empty(rung.omega, opts.tolerance(rung.omega)),
    })?;
    let (curve, report) = solve_curve(&map, init, opts)?;
    Ok(LadderCurve {
        rung,
        map,
        curve,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ForcingSpec;

    fn osc(eps: f64) -> Oscillator {
        Oscillator::new(ForcingSpec::cosine(), eps).unwrap()
    }

    #[test]
    fn unperturbed_audits_at_floor() {
        let o = osc(0.0);
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [0.3 * i as f64, -30.0 - i as f64]).collect();
        assert!(check_symplectic(&o, MapKind::ImpactEnergy, &pts).unwrap().max_defect < 1e-12);
        assert!(check_exactness(&o, ExactnessForm::Energy, -50.0, 64).unwrap() < 1e-12);
        let r = check_tau_star_bounds(&o, &[10.0, 20.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.worst_ratio, 0.0);
        assert!(check_tau_star_bounds(&o, &[4.0], &[0.0]).is_err());
    }

    #[test]
    fn velocity_map_is_not_symplectic() {
        let o = osc(0.02);
        let pts: Vec<[f64; 2]> = (0..16).map(|i| [0.4 * i as f64, 10.0]).collect();
        let r = check_symplectic(&o, MapKind::Impact, &pts).unwrap();
        assert!(r.max_defect > 1e-5);
    }

    #[test]
    fn section_curve_inversion() {
        let c = CurveParametrization {
            phi_part: PeriodicFn::from_cos_sin(0.1, &[0.05], &[0.02], 2),
            i_part: PeriodicFn::from_cos_sin(-5.0, &[0.01], &[], 2),
            omega: 0.0,
        };
        let s = SectionCurve::from_scaled(&c, &ScaledMapSpec::new(7.0, 0.0));
        for t in [0.0, 1.0, 3.0, 6.2] {
            let th = s.theta_at(t);
            assert!(principal_angle(th + s.phi_part.eval(th) - t).abs() < 1e-14);
        }
        assert!((SectionCurve::flat(8.0).y_at(1.3) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn unperturbed_band_confines() {
        let o = osc(0.0);
        let r = confinement_run(&o, &SectionCurve::flat(8.0), &SectionCurve::flat(10.0), 8, 200, 1).unwrap();
        assert_eq!(r.breaches, 0);
        for t in &r.trials {
            assert_eq!(t.min_y, t.y0);
            assert_eq!(t.max_y, t.y0);
        }
        assert!(confinement_run(&o, &SectionCurve::flat(10.0), &SectionCurve::flat(8.0), 1, 1, 1).is_err());
    }
}
