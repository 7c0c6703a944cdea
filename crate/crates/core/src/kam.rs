//! Parametrization method for invariant circles of exact symplectic twist maps.
//!
//! A curve `φ(θ) = (θ + φ_φ(θ), φ_I(θ))` is invariant with rotation `ω` when
//! `F(φ(θ)) = φ(θ + ω)`. Each step corrects `φ` by `Δφ = aφ′ + bΩ⁻¹Jφ′`,
//! where `a`, `b` come from two cohomological equations. The convention here
//! is `J = [[0, 1], [-1, 0]]`, i.e. `Jv = (v_I, -v_φ)`.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{DynamicsError, Mat2};
use crate::fourier::{
    grid, oversampled_len, principal_angle, solve_cohomological, CohomologicalOptions,
    FourierError, PeriodicFn,
};
use crate::maps::AnnulusMap;
use crate::rotation::{rotation_number, RotationEstimate};

pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KamError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    SmallDivisor(#[from] FourierError),
    #[error("|<A>| = {avg_a:e} is below the nondegeneracy floor {floor:e}")]
    DegenerateAverage { avg_a: f64, floor: f64 },
    #[error("curve is not a graph over the angle: 1 + phi_phi' = {value} at theta = {theta}")]
    NotAGraph { theta: f64, value: f64 },
    #[error("no action with twist frequency {omega}")]
    NoInitialCurve { omega: f64 },
    #[error("invariance error grew for 3 consecutive iterations (last {error_norm:e})")]
    Diverged { error_norm: f64 },
    #[error("not converged after {iterations} iterations (error {error_norm:e})")]
    NotConverged { iterations: usize, error_norm: f64 },
}

/// A failed solve together with everything recorded up to the failure.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct KamFailure {
    #[source]
    pub error: KamError,
    pub report: KamReport,
}

/// `θ ↦ (θ + φ_φ(θ), φ_I(θ))` with target rotation `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveParametrization {
    pub phi_part: PeriodicFn,
    pub i_part: PeriodicFn,
    pub omega: f64,
}

impl CurveParametrization {
    /// The flat circle `I = action`.
    pub fn flat(action: f64, omega: f64, order: usize) -> Self {
        Self {
            phi_part: PeriodicFn::zeros(order),
            i_part: PeriodicFn::constant(action, order),
            omega,
        }
    }

    pub fn order(&self) -> usize {
        self.phi_part.order().max(self.i_part.order())
    }

    pub fn with_order(&self, order: usize) -> Self {
        Self {
            phi_part: self.phi_part.with_order(order),
            i_part: self.i_part.with_order(order),
            omega: self.omega,
        }
    }

    pub fn point(&self, theta: f64) -> [f64; 2] {
        [theta + self.phi_part.eval(theta), self.i_part.eval(theta)]
    }

    /// Reparametrizes by `θ ↦ θ + θ₀`; the point set is unchanged.
    pub fn shift_origin(&self, theta0: f64) -> Self {
        let mut phi_part = self.phi_part.shift(theta0);
        let mut coeffs = phi_part.coeffs().to_vec();
        coeffs[0] += theta0;
        phi_part = PeriodicFn::from_coeffs(coeffs);
        Self {
            phi_part,
            i_part: self.i_part.shift(theta0),
            omega: self.omega,
        }
    }

    /// Largest coefficient difference over both components.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.phi_part
            .max_coeff_diff(&other.phi_part)
            .max(self.i_part.max_coeff_diff(&other.i_part))
    }

    /// Smallest `1 + φ_φ′` on an `m`-point grid, with its location.
    pub fn min_graph_slope(&self, m: usize) -> (f64, f64) {
        let d = self.phi_part.derivative().samples(m);
        grid(m)
            .into_iter()
            .zip(d)
            .map(|(th, v)| (th, 1.0 + v))
            .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }
}

#[derive(Debug, Clone)]
pub struct KamOptions {
    /// Defaults to `1e-11 · max(1, |ω|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Defaults to `1e-4 · |α′(I)|` at the initial action.
    pub avg_a_floor: Option<f64>,
    pub cohomological: CohomologicalOptions,
    /// Iterates used for the rotation check of a converged curve; 0 skips it.
    pub rotation_iterations: usize,
}

impl Default for KamOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
            avg_a_floor: None,
            cohomological: CohomologicalOptions::default(),
            rotation_iterations: 2000,
        }
    }
}

impl KamOptions {
    pub fn tolerance(&self, omega: f64) -> f64 {
        self.tol.unwrap_or(1e-11 * omega.abs().max(1.0))
    }
}

/// `e(θ) = F(φ(θ)) - φ(θ + ω)` on a grid and as truncated series.
#[derive(Debug, Clone)]
pub struct InvarianceError {
    pub e_phi: PeriodicFn,
    pub e_i: PeriodicFn,
    /// `max |e|` over the raw grid samples.
    pub sup: f64,
    samples_phi: Vec<f64>,
    samples_i: Vec<f64>,
}

/// Intermediate quantities of one quasi-Newton step.
#[derive(Debug, Clone)]
pub struct KamStepWorkspace {
    pub e_phi: PeriodicFn,
    pub e_i: PeriodicFn,
    pub omega_fn: PeriodicFn,
    pub a_fn: PeriodicFn,
    pub a: PeriodicFn,
    pub b: PeriodicFn,
    pub avg_a: f64,
    /// `⟨(φ₊′)ᵀJe⟩ + ⟨e_φ′ e_I⟩`, zero for exact symplectic maps.
    pub exactness_defect: f64,
    pub correction_norm: f64,
    pub error_norm: f64,
    pub deriv_error_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub error_norm: f64,
    pub deriv_error_norm: f64,
    /// `μ = max(‖e‖, ‖e′‖)`, the quantity that squares from step to step.
    pub mu: f64,
    pub avg_a: Option<f64>,
    pub correction_norm: Option<f64>,
    pub exactness_defect: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Diverged,
    SmallDivisorFail,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct KamReport {
    pub omega: f64,
    pub tolerance: f64,
    pub history: Vec<IterationRecord>,
    pub verdict: Verdict,
    /// Number of invariance-error evaluations.
    pub iterations: usize,
    pub final_error: f64,
    pub decay_ratios: Vec<f64>,
    pub quadratic_decay: bool,
    pub fitted_strip_width: Option<f64>,
    pub rotation_check: Option<RotationEstimate>,
}

impl KamReport {
    pub fn empty(omega: f64, tolerance: f64) -> Self {
        Self {
            omega,
            tolerance,
            history: Vec::new(),
            verdict: Verdict::Failed,
            iterations: 0,
            final_error: f64::NAN,
            decay_ratios: Vec::new(),
            quadratic_decay: false,
            fitted_strip_width: None,
            rotation_check: None,
        }
    }

    pub fn error_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.error_norm).collect()
    }

    pub fn mu_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.mu).collect()
    }
}

struct Sampled {
    m: usize,
    points: Vec<[f64; 2]>,
    images: Vec<[f64; 2]>,
}

fn sample_curve<M: AnnulusMap + ?Sized>(map: &M, curve: &CurveParametrization, m: usize) -> Result<Sampled, DynamicsError> {
    let phi = curve.phi_part.samples(m);
    let i = curve.i_part.samples(m);
    let points: Vec<[f64; 2]> = grid(m)
        .into_iter()
        .zip(phi.iter().zip(&i))
        .map(|(th, (p, i))| [th + p, *i])
        .collect();
    let images = points
        .iter()
        .map(|&p| map.apply(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sampled { m, points, images })
}

fn error_from_samples(curve: &CurveParametrization, s: &Sampled) -> InvarianceError {
    let order = curve.order();
    let omega = curve.omega;
    let phi_plus = curve.phi_part.shift(omega).samples(s.m);
    let i_plus = curve.i_part.shift(omega).samples(s.m);
    let thetas = grid(s.m);
    let mut samples_phi = Vec::with_capacity(s.m);
    let mut samples_i = Vec::with_capacity(s.m);
    for j in 0..s.m {
        let target_phi = thetas[j] + omega + phi_plus[j];
        samples_phi.push(principal_angle(s.images[j][0] - target_phi));
        samples_i.push(s.images[j][1] - i_plus[j]);
    }
    let sup = samples_phi
        .iter()
        .chain(&samples_i)
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    InvarianceError {
        e_phi: PeriodicFn::from_samples(&samples_phi, order),
        e_i: PeriodicFn::from_samples(&samples_i, order),
        sup,
        samples_phi,
        samples_i,
    }
}

/// Evaluates the invariance error on the `4N` grid.
pub fn invariance_error<M: AnnulusMap + ?Sized>(
    map: &M,
    curve: &CurveParametrization,
) -> Result<InvarianceError, DynamicsError> {
    let s = sample_curve(map, curve, oversampled_len(curve.order()))?;
    Ok(error_from_samples(curve, &s))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Default nondegeneracy floor for a map: `1e-4 · |α′|` at `action`.
pub fn default_avg_a_floor<M: AnnulusMap + ?Sized>(map: &M, action: f64) -> f64 {
    let h = 1e-5 * action.abs().max(1.0);
    let slope = (map.twist(action + h) - map.twist(action - h)) / (2.0 * h);
    1e-4 * slope.abs()
}

fn step_from_samples<M: AnnulusMap + ?Sized>(
    map: &M,
    curve: &CurveParametrization,
    s: &Sampled,
    err: &InvarianceError,
    avg_a_floor: f64,
    coh: &CohomologicalOptions,
) -> Result<(CurveParametrization, KamStepWorkspace), KamError> {
    let m = s.m;
    let order = curve.order();
    let omega = curve.omega;
    let thetas = grid(m);

    let dphi = curve.phi_part.derivative();
    let di = curve.i_part.derivative();
    let tangent_phi: Vec<f64> = dphi.samples(m).into_iter().map(|v| 1.0 + v).collect();
    let tangent_i = di.samples(m);
    let u_phi: Vec<f64> = dphi.shift(omega).samples(m).into_iter().map(|v| 1.0 + v).collect();
    let u_i = di.shift(omega).samples(m);
    if let Some(j) = tangent_phi.iter().position(|&v| v <= 0.0) {
        return Err(KamError::NotAGraph {
            theta: thetas[j],
            value: tangent_phi[j],
        });
    }

    let jac: Vec<Mat2> = s
        .points
        .iter()
        .map(|&p| map.jacobian(p))
        .collect::<Result<_, _>>()?;

    let mut omega_s = vec![0.0; m];
    let mut a_s = vec![0.0; m];
    let mut ujte = vec![0.0; m];
    let mut c_s = vec![0.0; m];
    for j in 0..m {
        let (tp, ti) = (tangent_phi[j], tangent_i[j]);
        let (up, ui) = (u_phi[j], u_i[j]);
        let om = tp * tp + ti * ti;
        let om_plus = up * up + ui * ui;
        // DF · Jφ′ with Jφ′ = (φ′_I, -φ′_φ).
        let d = &jac[j];
        let w0 = d[0][0] * ti - d[0][1] * tp;
        let w1 = d[1][0] * ti - d[1][1] * tp;
        omega_s[j] = om;
        a_s[j] = (up * w0 + ui * w1) / (om * om_plus);
        let (ep, ei) = (err.samples_phi[j], err.samples_i[j]);
        ujte[j] = up * ei - ui * ep;
        c_s[j] = (up * ep + ui * ei) / om_plus;
    }

    let de_phi = err.e_phi.derivative().samples(m);
    let cross: Vec<f64> = de_phi.iter().zip(&err.samples_i).map(|(a, b)| a * b).collect();
    let exactness_defect = mean(&ujte) + mean(&cross);

    let a_fn = PeriodicFn::from_samples(&a_s, order);
    let avg_a = mean(&a_s);
    if !(avg_a.abs() > avg_a_floor) {
        return Err(KamError::DegenerateAverage {
            avg_a,
            floor: avg_a_floor,
        });
    }

    let rhs_b = -&PeriodicFn::from_samples(&ujte, order).without_average();
    let b_tilde = solve_cohomological(&rhs_b, omega, coh)?;
    let b_tilde_s = b_tilde.samples(m);
    let avg_ab: f64 = mean(&a_s.iter().zip(&b_tilde_s).map(|(x, y)| x * y).collect::<Vec<_>>());
    let b_mean = -(avg_ab + mean(&c_s)) / avg_a;
    let b = &b_tilde + &PeriodicFn::constant(b_mean, order);
    let b_s = b.samples(m);

    let rhs_a_s: Vec<f64> = (0..m).map(|j| a_s[j] * b_s[j] + c_s[j]).collect();
    let rhs_a = PeriodicFn::from_samples(&rhs_a_s, order).without_average();
    let a = solve_cohomological(&rhs_a, omega, coh)?;
    let a_s_corr = a.samples(m);

    let mut d_phi = vec![0.0; m];
    let mut d_i = vec![0.0; m];
    for j in 0..m {
        let (tp, ti) = (tangent_phi[j], tangent_i[j]);
        let bo = b_s[j] / omega_s[j];
        d_phi[j] = a_s_corr[j] * tp + bo * ti;
        d_i[j] = a_s_corr[j] * ti - bo * tp;
    }
    let correction_norm = sup_abs(&d_phi).max(sup_abs(&d_i));
    let new_curve = CurveParametrization {
        phi_part: &curve.phi_part + &PeriodicFn::from_samples(&d_phi, order),
        i_part: &curve.i_part + &PeriodicFn::from_samples(&d_i, order),
        omega,
    };
    let deriv_error_norm = sup_abs(&de_phi).max(err.e_i.derivative().grid_sup(m));
    let ws = KamStepWorkspace {
        e_phi: err.e_phi.clone(),
        e_i: err.e_i.clone(),
        omega_fn: PeriodicFn::from_samples(&omega_s, order),
        a_fn,
        a,
        b,
        avg_a,
        exactness_defect,
        correction_norm,
        error_norm: err.sup,
        deriv_error_norm,
    };
    Ok((new_curve, ws))
}

/// One quasi-Newton correction of `curve`.
pub fn kam_step<M: AnnulusMap + ?Sized>(
    map: &M,
    curve: &CurveParametrization,
    opts: &KamOptions,
) -> Result<(CurveParametrization, KamStepWorkspace), KamError> {
    let s = sample_curve(map, curve, oversampled_len(curve.order()))?;
    let err = error_from_samples(curve, &s);
    let floor = opts
        .avg_a_floor
        .unwrap_or_else(|| default_avg_a_floor(map, curve.i_part.average()));
    step_from_samples(map, curve, &s, &err, floor, &opts.cohomological)
}

/// The flat circle `I = α⁻¹(ω)`.
pub fn initial_circle<M: AnnulusMap + ?Sized>(
    map: &M,
    omega: f64,
    order: usize,
) -> Result<CurveParametrization, KamError> {
    let action = map
        .action_for_frequency(omega)
        .ok_or(KamError::NoInitialCurve { omega })?;
    Ok(CurveParametrization::flat(action, omega, order))
}

/// `ln μ_{n+1} / ln μ_n` over consecutive values below 1 and above `floor`.
pub fn decay_ratios(errors: &[f64], floor: f64) -> Vec<f64> {
    errors
        .windows(2)
        .filter(|w| w[0] < 1.0 && w[0] > floor && w[1] > floor)
        .map(|w| w[1].ln() / w[0].ln())
        .collect()
}

/// Error level treated as the round-off floor for a curve of scale `omega`.
pub fn roundoff_floor(omega: f64) -> f64 {
    1e-13 * omega.abs().max(1.0)
}

/// Newton iteration for `F(φ(θ)) = φ(θ + ω)` starting from `init`.
#[allow(clippy::result_large_err)]
pub fn solve_curve<M: AnnulusMap + ?Sized>(
    map: &M,
    init: CurveParametrization,
    opts: &KamOptions,
) -> Result<(CurveParametrization, KamReport), KamFailure> {
    let omega = init.omega;
    let tol = opts.tolerance(omega);
    let mut report = KamReport::empty(omega, tol);
    let floor = opts
        .avg_a_floor
        .unwrap_or_else(|| default_avg_a_floor(map, init.i_part.average()));
    let m = oversampled_len(init.order());
    let mut curve = init;
    let mut growth = 0usize;
    let fail = |error: KamError, mut report: KamReport| {
        report.verdict = match error {
            KamError::SmallDivisor(_) => Verdict::SmallDivisorFail,
            KamError::Diverged { .. } => Verdict::Diverged,
            _ => Verdict::Failed,
        };
        finish_ratios(&mut report);
        KamFailure { error, report }
    };

    for it in 1..=opts.max_iter {
        let s = match sample_curve(map, &curve, m) {
            Ok(s) => s,
            Err(e) => return Err(fail(e.into(), report)),
        };
        let err = error_from_samples(&curve, &s);
        report.iterations = it;
        report.final_error = err.sup;
        if let Some(prev) = report.history.last() {
            growth = if err.sup > prev.error_norm { growth + 1 } else { 0 };
        }
        if err.sup < tol {
            report.history.push(bare_record(it, &err, m));
            report.verdict = Verdict::Converged;
            finish_ratios(&mut report);
            report.fitted_strip_width = fitted_width(&curve);
            if opts.rotation_iterations > 0 {
                report.rotation_check =
                    rotation_number(map, curve.point(0.0), opts.rotation_iterations).ok();
            }
            return Ok((curve, report));
        }
        if growth >= 3 {
            report.history.push(bare_record(it, &err, m));
            return Err(fail(KamError::Diverged { error_norm: err.sup }, report));
        }
        match step_from_samples(map, &curve, &s, &err, floor, &opts.cohomological) {
            Ok((next, ws)) => {
                report.history.push(IterationRecord {
                    iteration: it,
                    error_norm: err.sup,
                    deriv_error_norm: ws.deriv_error_norm,
                    mu: err.sup.max(ws.deriv_error_norm),
                    avg_a: Some(ws.avg_a),
                    correction_norm: Some(ws.correction_norm),
                    exactness_defect: Some(ws.exactness_defect),
                });
                curve = next;
            }
            Err(e) => {
                report.history.push(bare_record(it, &err, m));
                return Err(fail(e, report));
            }
        }
    }
    let error = KamError::NotConverged {
        iterations: opts.max_iter,
        error_norm: report.final_error,
    };
    Err(fail(error, report))
}

/// History entry for an iterate that produced no correction.
fn bare_record(iteration: usize, err: &InvarianceError, m: usize) -> IterationRecord {
    let deriv_error_norm = err
        .e_phi
        .derivative()
        .grid_sup(m)
        .max(err.e_i.derivative().grid_sup(m));
    IterationRecord {
        iteration,
        error_norm: err.sup,
        deriv_error_norm,
        mu: err.sup.max(deriv_error_norm),
        avg_a: None,
        correction_norm: None,
        exactness_defect: None,
    }
}

fn finish_ratios(report: &mut KamReport) {
    let errors = report.mu_history();
    report.decay_ratios = decay_ratios(&errors, roundoff_floor(report.omega));
    report.quadratic_decay = quadratic_flag(&report.decay_ratios);
}

/// True when two consecutive decay ratios lie in `[1.5, 2.5]`, i.e. three
/// consecutive pre-floor errors follow the squaring law. Early ratios from a
/// far-off initial guess may fall outside.
pub fn quadratic_flag(ratios: &[f64]) -> bool {
    ratios
        .windows(2)
        .any(|w| w.iter().all(|r| (1.5..=2.5).contains(r)))
}

fn fitted_width(curve: &CurveParametrization) -> Option<f64> {
    let a = curve.phi_part.fitted_decay_rate(1e-14);
    let b = curve.i_part.fitted_decay_rate(1e-14);
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}
