//! Flows, impact times and impact maps of `ẍ + sign(x) = ε p(t)`.
//!
//! On `x > 0` the motion is a forced parabola with deceleration `1`, on
//! `x < 0` the mirror image. Both half-flows are closed-form in terms of the
//! antiderivatives `P̃₁`, `P̃₂` of the zero-mean forcing. The impact map is the
//! return map to `Σ⁺ = {x = 0, y > 0}` obtained by chaining the right half
//! (`Σ⁺ → Σ⁻`) and the left half (`Σ⁻ → Σ⁺`).

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::PeriodicFn;

/// Default grazing floor for `|y|` on the section.
pub const DEFAULT_Y_MIN: f64 = 1e-3;
/// Default analyticity width used for `p̃`.
pub const DEFAULT_RHO: f64 = 0.25;
/// Iteration cap shared by both root finders.
pub const MAX_ROOT_ITERATIONS: usize = 100;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("{method:?} impact-time iteration did not converge after {iterations} steps")]
    NoConvergence { method: RootMethod, iterations: usize },
    #[error("impact time {tau} is not positive; outside the validity regime")]
    NonPositiveRoot { tau: f64 },
    #[error("no sign change of the impact equation on [{lo}, {hi}]")]
    UnbracketedRoot { lo: f64, hi: f64 },
    #[error("velocity {y} on the section is below the grazing floor {y_min}")]
    Grazing { y: f64, y_min: f64 },
    #[error("impact velocity {y} is singular for the Jacobian (floor {y_min})")]
    SingularImpact { y: f64, y_min: f64 },
    #[error("point ({angle}, {action}) left the map domain: {reason}")]
    DomainEscape {
        angle: f64,
        action: f64,
        reason: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;

/// Fourier data of the forcing `p(t) = a₀ + Σ (a_k cos kt + b_k sin kt)` and
/// the derived zero-mean family `P̃₋₁ = P̃₀′`, `P̃₀ = p - a₀`, `P̃₁′ = P̃₀`, `P̃₂′ = P̃₁`.
#[derive(Debug, Clone)]
pub struct ForcingSpec {
    pub a0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub rho: f64,
    p: PeriodicFn,
    p_minus1: PeriodicFn,
    p0: PeriodicFn,
    p1: PeriodicFn,
    p2: PeriodicFn,
    p_tilde: f64,
}

impl ForcingSpec {
    pub fn new(a0: f64, cos: Vec<f64>, sin: Vec<f64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "analyticity width rho = {rho} must lie in (0, 1)"
            )));
        }
        if !a0.is_finite() || cos.iter().chain(&sin).any(|c| !c.is_finite()) {
            return Err(DynamicsError::InvalidParameter(
                "forcing coefficients must be finite".into(),
            ));
        }
        let order = cos.len().max(sin.len()).max(1);
        let p = PeriodicFn::from_cos_sin(a0, &cos, &sin, order);
        let p0 = p.without_average();
        let p1 = p0.antiderivative();
        let p2 = p1.antiderivative();
        let p_minus1 = p0.derivative();
        let p_tilde = [&p_minus1, &p0, &p1, &p2]
            .iter()
            .map(|f| f.strip_norm(rho).value)
            .fold(0.0, f64::max);
        Ok(Self {
            a0,
            cos,
            sin,
            rho,
            p,
            p_minus1,
            p0,
            p1,
            p2,
            p_tilde,
        })
    }

    /// `p(t) = cos t`.
    pub fn cosine() -> Self {
        Self::new(0.0, vec![1.0], vec![], DEFAULT_RHO).expect("valid forcing")
    }

    pub fn p(&self) -> &PeriodicFn {
        &self.p
    }

    /// `P̃_j` for `j ∈ {-1, 0, 1, 2}`.
    pub fn p_tilde_fn(&self, j: i32) -> &PeriodicFn {
        match j {
            -1 => &self.p_minus1,
            0 => &self.p0,
            1 => &self.p1,
            2 => &self.p2,
            _ => panic!("P̃_j is defined for j in -1..=2, got {j}"),
        }
    }

    /// `p̃ = max_j ‖P̃_j‖_ρ`.
    pub fn p_tilde(&self) -> f64 {
        self.p_tilde
    }

    /// `P₁(τ, t₀) = ∫₀^τ p(s + t₀) ds`.
    pub fn big_p1(&self, tau: f64, t0: f64) -> f64 {
        self.a0 * tau + self.p1.eval(t0 + tau) - self.p1.eval(t0)
    }

    /// `P₂(τ, t₀) = ∫₀^τ P₁(s, t₀) ds`.
    pub fn big_p2(&self, tau: f64, t0: f64) -> f64 {
        0.5 * self.a0 * tau * tau - tau * self.p1.eval(t0) + self.p2.eval(t0 + tau)
            - self.p2.eval(t0)
    }
}

/// A state `(t, x, y)` of the extended phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl PhasePoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }
}

/// A point `(t₀, y₀)` of `Σ⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactPoint {
    pub t0: f64,
    pub y0: f64,
}

impl ImpactPoint {
    pub fn new(t0: f64, y0: f64) -> Self {
        Self { t0, y0 }
    }

    pub fn energy(&self) -> f64 {
        -0.5 * self.y0 * self.y0
    }
}

/// Which half-plane the motion is in: `Right` is `x > 0` (restoring force `-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Right => 1.0,
            Side::Left => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    #[default]
    Newton,
    FixedPoint,
}

/// `τ = τ₀ + ε τ*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactTimeDecomposition {
    pub tau: f64,
    pub tau0: f64,
    pub tau_star: f64,
    pub iterations: usize,
}

/// `t̄ = t₀ + α + ε f_t`, `ȳ = y₀ + ε f_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactMapOutput {
    pub t_bar: f64,
    pub y_bar: f64,
    pub alpha: f64,
    pub f_t0: f64,
    pub f_y0: f64,
    /// Intermediate point on `Σ⁻`.
    pub t1: f64,
    pub y1: f64,
    pub tau_plus: ImpactTimeDecomposition,
    pub tau_minus: ImpactTimeDecomposition,
}

/// Energy-coordinate form `t̄ = t₀ + ᾱ(E₀) + ε f_t`, `Ē = E₀ + ε f_E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyMapOutput {
    pub t_bar: f64,
    pub e_bar: f64,
    pub alpha: f64,
    pub f_t0: f64,
    pub f_e0: f64,
}

/// Localization data around the unperturbed circle `y₀ = y₀*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledMapSpec {
    pub y0_star: f64,
    pub epsilon: f64,
    /// Real half-width of the admissible action interval around `I₀*`.
    pub action_radius: f64,
}

impl ScaledMapSpec {
    pub const DEFAULT_ACTION_RADIUS: f64 = 0.9;

    pub fn new(y0_star: f64, epsilon: f64) -> Self {
        Self {
            y0_star,
            epsilon,
            action_radius: Self::DEFAULT_ACTION_RADIUS,
        }
    }

    /// `E₀* = -(y₀*)²/2`.
    pub fn e0_star(&self) -> f64 {
        -0.5 * self.y0_star * self.y0_star
    }

    /// `I₀* = -y₀*/√2`.
    pub fn i0_star(&self) -> f64 {
        -self.y0_star / SQRT_2
    }

    /// `y₀(I) = √(-√2 y₀* I)`.
    pub fn y_of_action(&self, action: f64) -> f64 {
        (-SQRT_2 * self.y0_star * action).sqrt()
    }

    /// Inverse of [`Self::y_of_action`].
    pub fn action_of_y(&self, y: f64) -> f64 {
        -y * y / (SQRT_2 * self.y0_star)
    }
}

/// Result of the localized map `F = ψ̄⁻¹ ∘ 𝒫̄_ε ∘ ψ̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMapOutput {
    pub phi_bar: f64,
    pub i_bar: f64,
    pub alpha: f64,
    pub f_phi: f64,
    pub f_i: f64,
}

/// Coordinates in which a map is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MapKind {
    /// `(t₀, y₀) ↦ (t̄₀, ȳ₀)`.
    Impact,
    /// `(t₀, E₀) ↦ (t̄₀, Ē₀)`.
    ImpactEnergy,
    /// `(φ, I) ↦ F(φ, I)`.
    Scaled(ScaledMapSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Proven-regime flags for a given `(ε, forcing)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    pub a0_eps: f64,
    /// `864 ε p̃ < ρ`.
    pub smallness_ok: bool,
}

/// The forced relay oscillator at a fixed `ε`.
#[derive(Debug, Clone)]
pub struct Oscillator {
    forcing: Arc<ForcingSpec>,
    epsilon: f64,
    y_min: f64,
    method: RootMethod,
}

impl Oscillator {
    pub fn new(forcing: ForcingSpec, epsilon: f64) -> Result<Self> {
        Self::with_shared(Arc::new(forcing), epsilon)
    }

    pub fn with_shared(forcing: Arc<ForcingSpec>, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(DynamicsError::InvalidParameter(format!(
                "epsilon = {epsilon} must be finite and non-negative"
            )));
        }
        if (forcing.a0 * epsilon).abs() >= 0.5 {
            return Err(DynamicsError::InvalidParameter(format!(
                "|a0 * epsilon| = {} must stay below 1/2",
                (forcing.a0 * epsilon).abs()
            )));
        }
        Ok(Self {
            forcing,
            epsilon,
            y_min: DEFAULT_Y_MIN,
            method: RootMethod::Newton,
        })
    }

    pub fn with_y_min(mut self, y_min: f64) -> Self {
        self.y_min = y_min;
        self
    }

    pub fn with_method(mut self, method: RootMethod) -> Self {
        self.method = method;
        self
    }

    pub fn forcing(&self) -> &ForcingSpec {
        &self.forcing
    }

    pub fn shared_forcing(&self) -> Arc<ForcingSpec> {
        Arc::clone(&self.forcing)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn method(&self) -> RootMethod {
        self.method
    }

    pub fn validity(&self) -> Validity {
        Validity {
            a0_eps: (self.forcing.a0 * self.epsilon).abs(),
            smallness_ok: 864.0 * self.epsilon * self.forcing.p_tilde() < self.forcing.rho,
        }
    }

    /// `1 - a₀²ε²`.
    fn twist_denominator(&self) -> f64 {
        1.0 - (self.forcing.a0 * self.epsilon).powi(2)
    }

    /// `α_ε(y₀) = 4y₀/(1 - a₀²ε²)`.
    pub fn alpha(&self, y0: f64) -> f64 {
        4.0 * y0 / self.twist_denominator()
    }

    /// `ᾱ_ε(E₀) = 4√(-2E₀)/(1 - a₀²ε²)`.
    pub fn alpha_energy(&self, e0: f64) -> f64 {
        4.0 * (-2.0 * e0).sqrt() / self.twist_denominator()
    }

    /// Closed-form half-flow on one side of `Σ`. The side is not checked
    /// against the sign of `x` along the arc.
    pub fn flow(&self, side: Side, p: PhasePoint, tau: f64) -> PhasePoint {
        let s = side.sign();
        let eps = self.epsilon;
        PhasePoint {
            t: p.t + tau,
            x: p.x + tau * p.y - s * 0.5 * tau * tau + eps * self.forcing.big_p2(tau, p.t),
            y: p.y - s * tau + eps * self.forcing.big_p1(tau, p.t),
        }
    }

    pub fn flow_right(&self, p: PhasePoint, tau: f64) -> PhasePoint {
        self.flow(Side::Right, p, tau)
    }

    pub fn flow_left(&self, p: PhasePoint, tau: f64) -> PhasePoint {
        self.flow(Side::Left, p, tau)
    }

    fn check_section_velocity(&self, side: Side, y: f64) -> Result<()> {
        let ok = match side {
            Side::Right => y > self.y_min,
            Side::Left => y < -self.y_min,
        };
        if ok && y.is_finite() {
            Ok(())
        } else {
            Err(DynamicsError::Grazing {
                y,
                y_min: self.y_min,
            })
        }
    }

    /// Scalar impact equation in the form it appears for `x₀ = 0`:
    /// `τy - s(1 - s a₀ε)τ²/2 - ετP̃₁(t) + εP̃₂(t + τ) - εP̃₂(t)`.
    pub fn impact_residual(&self, side: Side, t: f64, y: f64, tau: f64) -> f64 {
        let s = side.sign();
        let eps = self.epsilon;
        let c = 1.0 - s * self.forcing.a0 * eps;
        let p1 = self.forcing.p1.eval(t);
        let p2 = self.forcing.p2.eval(t);
        tau * y - s * 0.5 * c * tau * tau - eps * tau * p1 + eps * self.forcing.p2.eval(t + tau)
            - eps * p2
    }

    /// Smallest positive `τ` with `x(τ) = 0`, starting from `(t, 0, y)`.
    pub fn impact_time(
        &self,
        side: Side,
        t: f64,
        y: f64,
        method: RootMethod,
    ) -> Result<ImpactTimeDecomposition> {
        self.check_section_velocity(side, y)?;
        let s = side.sign();
        let eps = self.epsilon;
        let c = 1.0 - s * self.forcing.a0 * eps;
        let p1_t = self.forcing.p1.eval(t);
        let p2_t = self.forcing.p2.eval(t);
        let tau0 = 2.0 * s * (y - eps * p1_t) / c;
        if tau0 <= 0.0 || !tau0.is_finite() {
            return Err(DynamicsError::NonPositiveRoot { tau: tau0 });
        }
        if eps == 0.0 {
            return Ok(ImpactTimeDecomposition {
                tau: tau0,
                tau0,
                tau_star: 0.0,
                iterations: 0,
            });
        }
        let (tau_star, iterations) = match method {
            RootMethod::Newton => self.impact_newton(s, c, t, tau0, p2_t)?,
            RootMethod::FixedPoint => self.impact_fixed_point(s, c, t, y, tau0, p2_t)?,
        };
        let tau = tau0 + eps * tau_star;
        if tau <= 0.0 {
            return Err(DynamicsError::NonPositiveRoot { tau });
        }
        Ok(ImpactTimeDecomposition {
            tau,
            tau0,
            tau_star,
            iterations,
        })
    }

    /// Safeguarded Newton on the offset `δ = τ - τ₀ = ε τ*`, bracketed by
    /// `τ ∈ [τ₀/2, 2τ₀]`. The residual is written as
    /// `-s c τ (τ - τ₀)/2 + ε(P̃₂(t + τ) - P̃₂(t))`, which is the impact
    /// equation with the dominant balance factored out.
    fn impact_newton(&self, s: f64, c: f64, t: f64, tau0: f64, p2_t: f64) -> Result<(f64, usize)> {
        let eps = self.epsilon;
        let p1 = &self.forcing.p1;
        let p2 = &self.forcing.p2;
        let residual = |d: f64| {
            let tau = tau0 + d;
            -s * c * tau * d * 0.5 + eps * (p2.eval(t + tau) - p2_t)
        };
        let slope = |d: f64| {
            let tau = tau0 + d;
            -s * c * (2.0 * tau - tau0) * 0.5 + eps * p1.eval(t + tau)
        };
        // Orient so that the residual is positive at `lo` and negative at `hi`.
        let (mut lo, mut hi) = (-0.5 * tau0, tau0);
        let (r_lo, r_hi) = (s * residual(lo), s * residual(hi));
        if !(r_lo > 0.0 && r_hi < 0.0) {
            return Err(DynamicsError::UnbracketedRoot {
                lo: tau0 + lo,
                hi: tau0 + hi,
            });
        }
        let mut d = 0.0;
        for it in 1..=MAX_ROOT_ITERATIONS {
            let r = residual(d);
            if r == 0.0 {
                return Ok((d / eps, it));
            }
            if s * r > 0.0 {
                lo = d;
            } else {
                hi = d;
            }
            let dr = slope(d);
            let mut next = d - r / dr;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let step = (next - d).abs();
            d = next;
            if step <= 4.0 * f64::EPSILON * tau0.max(1.0) * 1e-3 || step <= f64::EPSILON * d.abs()
            {
                return Ok((d / eps, it));
            }
            if hi - lo <= f64::EPSILON * tau0 {
                return Ok((d / eps, it));
            }
        }
        Err(DynamicsError::NoConvergence {
            method: RootMethod::Newton,
            iterations: MAX_ROOT_ITERATIONS,
        })
    }

    /// Iterates `τ* ↦ 2s(P̃₂(t + τ₀ + ετ*) - P̃₂(t)) / (c(τ₀ + ετ*))`.
    fn impact_fixed_point(
        &self,
        s: f64,
        c: f64,
        t: f64,
        y: f64,
        tau0: f64,
        p2_t: f64,
    ) -> Result<(f64, usize)> {
        let eps = self.epsilon;
        let p2 = &self.forcing.p2;
        let tol = 1e-12 * y.abs().max(1.0);
        let mut star = 0.0_f64;
        for it in 1..=MAX_ROOT_ITERATIONS {
            let tau = tau0 + eps * star;
            if tau <= 0.0 {
                return Err(DynamicsError::NonPositiveRoot { tau });
            }
            let next = 2.0 * s * (p2.eval(t + tau) - p2_t) / (c * tau);
            let diff = (next - star).abs();
            star = next;
            if diff < tol {
                // One more sweep costs nothing and removes the last contraction error.
                let tau = tau0 + eps * star;
                star = 2.0 * s * (p2.eval(t + tau) - p2_t) / (c * tau);
                return Ok((star, it + 1));
            }
        }
        Err(DynamicsError::NoConvergence {
            method: RootMethod::FixedPoint,
            iterations: MAX_ROOT_ITERATIONS,
        })
    }

    pub fn impact_time_plus(&self, t0: f64, y0: f64, method: RootMethod) -> Result<ImpactTimeDecomposition> {
        self.impact_time(Side::Right, t0, y0, method)
    }

    pub fn impact_time_minus(&self, t1: f64, y1: f64, method: RootMethod) -> Result<ImpactTimeDecomposition> {
        self.impact_time(Side::Left, t1, y1, method)
    }

    /// One half of the impact map: `(t, y) ↦ (t + τ, y_after)` with
    /// `y_after = -y + ε(P̃₁(t + τ) + P̃₁(t) - s c τ*)`.
    pub fn half_map(&self, side: Side, t: f64, y: f64) -> Result<(f64, f64, ImpactTimeDecomposition)> {
        let dec = self.impact_time(side, t, y, self.method)?;
        let s = side.sign();
        let eps = self.epsilon;
        let c = 1.0 - s * self.forcing.a0 * eps;
        let t_next = t + dec.tau;
        let p1 = &self.forcing.p1;
        let y_next = -y + eps * (p1.eval(t_next) + p1.eval(t) - s * c * dec.tau_star);
        Ok((t_next, y_next, dec))
    }

    /// `𝒫⁺_ε : Σ⁺ → Σ⁻`.
    pub fn half_map_plus(&self, q: ImpactPoint) -> Result<(f64, f64)> {
        self.half_map(Side::Right, q.t0, q.y0).map(|(t, y, _)| (t, y))
    }

    /// `𝒫⁻_ε : Σ⁻ → Σ⁺`.
    pub fn half_map_minus(&self, t1: f64, y1: f64) -> Result<(f64, f64)> {
        self.half_map(Side::Left, t1, y1).map(|(t, y, _)| (t, y))
    }

    /// Full impact map `𝒫_ε = 𝒫⁻_ε ∘ 𝒫⁺_ε` with its perturbative split. The
    /// output angle is a lift: `t̄ - t₀` is the elapsed time.
    pub fn impact_map(&self, q: ImpactPoint) -> Result<ImpactMapOutput> {
        let eps = self.epsilon;
        let a0 = self.forcing.a0;
        let p1 = &self.forcing.p1;
        let (t1, y1, tau_plus) = self.half_map(Side::Right, q.t0, q.y0)?;
        let tau_minus = self.impact_time(Side::Left, t1, y1, self.method)?;
        let den = self.twist_denominator();
        let alpha = 4.0 * q.y0 / den;
        if eps == 0.0 {
            return Ok(ImpactMapOutput {
                t_bar: q.t0 + alpha,
                y_bar: q.y0,
                alpha,
                f_t0: 0.0,
                f_y0: 0.0,
                t1,
                y1,
                tau_plus,
                tau_minus,
            });
        }
        let p1_t0 = p1.eval(q.t0);
        let f_t0 = -4.0 * p1_t0 / den
            + (3.0 - a0 * eps) / (1.0 + a0 * eps) * tau_plus.tau_star
            + tau_minus.tau_star;
        let t_bar = q.t0 + alpha + eps * f_t0;
        let f_y0 = p1.eval(t_bar) - p1_t0
            + (1.0 - a0 * eps) * tau_plus.tau_star
            + (1.0 + a0 * eps) * tau_minus.tau_star;
        let y_bar = q.y0 + eps * f_y0;
        if y_bar <= self.y_min {
            return Err(DynamicsError::Grazing {
                y: y_bar,
                y_min: self.y_min,
            });
        }
        Ok(ImpactMapOutput {
            t_bar,
            y_bar,
            alpha,
            f_t0,
            f_y0,
            t1,
            y1,
            tau_plus,
            tau_minus,
        })
    }

    /// `𝒫̄_ε(t₀, E₀)`, the impact map under `E = -y²/2`.
    pub fn impact_map_energy(&self, t0: f64, e0: f64) -> Result<EnergyMapOutput> {
        if !(e0 < -0.5 * self.y_min * self.y_min) {
            return Err(DynamicsError::Grazing {
                y: (-2.0 * e0).max(0.0).sqrt(),
                y_min: self.y_min,
            });
        }
        let y0 = (-2.0 * e0).sqrt();
        let out = self.impact_map(ImpactPoint::new(t0, y0))?;
        let e_bar = -0.5 * out.y_bar * out.y_bar;
        let f_e0 = -(2.0 * y0 * out.f_y0 + self.epsilon * out.f_y0 * out.f_y0) * 0.5;
        Ok(EnergyMapOutput {
            t_bar: out.t_bar,
            e_bar,
            alpha: self.alpha_energy(e0),
            f_t0: out.f_t0,
            f_e0,
        })
    }

    fn check_scaled_domain(&self, spec: &ScaledMapSpec, phi: f64, action: f64) -> Result<()> {
        if !((action - spec.i0_star()).abs() < spec.action_radius) || action >= 0.0 {
            return Err(DynamicsError::DomainEscape {
                angle: phi,
                action,
                reason: "action outside the disc around I0*",
            });
        }
        Ok(())
    }

    /// Localized, rescaled impact map around `y₀ = y₀*`.
    pub fn scaled_map(&self, spec: &ScaledMapSpec, phi: f64, action: f64) -> Result<ScaledMapOutput> {
        self.check_scaled_domain(spec, phi, action)?;
        let y0 = spec.y_of_action(action);
        let out = self.impact_map(ImpactPoint::new(phi, y0))?;
        let eps = self.epsilon;
        let f_phi = eps * out.f_t0;
        let f_i = -eps / (SQRT_2 * spec.y0_star) * (2.0 * y0 * out.f_y0 + eps * out.f_y0 * out.f_y0);
        Ok(ScaledMapOutput {
            phi_bar: phi + out.alpha + f_phi,
            i_bar: action + f_i,
            alpha: out.alpha,
            f_phi,
            f_i,
        })
    }

    /// `α(I) = 4√(-√2 y₀* I)/(1 - a₀²ε²)`.
    pub fn scaled_alpha(&self, spec: &ScaledMapSpec, action: f64) -> f64 {
        self.alpha(spec.y_of_action(action))
    }

    /// `α′(I)`.
    pub fn scaled_alpha_prime(&self, spec: &ScaledMapSpec, action: f64) -> f64 {
        let y = spec.y_of_action(action);
        4.0 / self.twist_denominator() * (-spec.y0_star / (SQRT_2 * y))
    }

    /// Jacobian of one half map at `(t, y)` via implicit differentiation of
    /// `x(τ; t, y) = 0`, using `∂_τ x = y(τ)`.
    fn half_jacobian(&self, side: Side, t: f64, y: f64) -> Result<(f64, f64, Mat2)> {
        let (t_next, _, dec) = self.half_map(side, t, y)?;
        let s = side.sign();
        let eps = self.epsilon;
        let f = &*self.forcing;
        let tau = dec.tau;
        let y_hit = y - s * tau + eps * f.big_p1(tau, t);
        if y_hit.abs() < self.y_min {
            return Err(DynamicsError::SingularImpact {
                y: y_hit,
                y_min: self.y_min,
            });
        }
        let dx_dt = eps * (-tau * f.p0.eval(t) + f.p1.eval(t_next) - f.p1.eval(t));
        let dx_dy = tau;
        let dtau_dt = -dx_dt / y_hit;
        let dtau_dy = -dx_dy / y_hit;
        let dy_dtau = -s + eps * f.p.eval(t_next);
        let jac = [
            [1.0 + dtau_dt, dtau_dy],
            [
                eps * (f.p0.eval(t_next) - f.p0.eval(t)) + dy_dtau * dtau_dt,
                1.0 + dy_dtau * dtau_dy,
            ],
        ];
        Ok((t_next, y_hit, jac))
    }

    /// Analytic Jacobian of `𝒫_ε` in `(t₀, y₀)`; also returns `ȳ₀`.
    fn impact_jacobian(&self, t0: f64, y0: f64) -> Result<(f64, Mat2)> {
        let (t1, y1, j_plus) = self.half_jacobian(Side::Right, t0, y0)?;
        let (_, y_bar, j_minus) = self.half_jacobian(Side::Left, t1, y1)?;
        Ok((y_bar, mat_mul(&j_minus, &j_plus)))
    }

    /// Evaluates the chosen map at `point` as a plain pair.
    pub fn apply(&self, map: MapKind, point: [f64; 2]) -> Result<[f64; 2]> {
        match map {
            MapKind::Impact => {
                let out = self.impact_map(ImpactPoint::new(point[0], point[1]))?;
                Ok([out.t_bar, out.y_bar])
            }
            MapKind::ImpactEnergy => {
                let out = self.impact_map_energy(point[0], point[1])?;
                Ok([out.t_bar, out.e_bar])
            }
            MapKind::Scaled(spec) => {
                let out = self.scaled_map(&spec, point[0], point[1])?;
                Ok([out.phi_bar, out.i_bar])
            }
        }
    }

    pub fn jacobian(&self, map: MapKind, point: [f64; 2], mode: JacobianMode) -> Result<Mat2> {
        match mode {
            JacobianMode::Analytic => self.analytic_jacobian(map, point),
            JacobianMode::FiniteDifference => {
                finite_difference_jacobian(|p| self.apply(map, p), point)
            }
        }
    }

    fn analytic_jacobian(&self, map: MapKind, point: [f64; 2]) -> Result<Mat2> {
        match map {
            MapKind::Impact => {
                if !(point[1] > self.y_min) {
                    return Err(DynamicsError::Grazing {
                        y: point[1],
                        y_min: self.y_min,
                    });
                }
                Ok(self.impact_jacobian(point[0], point[1])?.1)
            }
            MapKind::ImpactEnergy => {
                let e0 = point[1];
                if !(e0 < -0.5 * self.y_min * self.y_min) {
                    return Err(DynamicsError::Grazing {
                        y: (-2.0 * e0).max(0.0).sqrt(),
                        y_min: self.y_min,
                    });
                }
                let y0 = (-2.0 * e0).sqrt();
                let (y_bar, j) = self.impact_jacobian(point[0], y0)?;
                Ok(conjugate_action(&j, -1.0 / y0, -y_bar))
            }
            MapKind::Scaled(spec) => {
                self.check_scaled_domain(&spec, point[0], point[1])?;
                let y0 = spec.y_of_action(point[1]);
                let (y_bar, j) = self.impact_jacobian(point[0], y0)?;
                let dy_di = -spec.y0_star / (SQRT_2 * y0);
                let di_dy = -SQRT_2 * y_bar / spec.y0_star;
                Ok(conjugate_action(&j, dy_di, di_dy))
            }
        }
    }
}

/// `diag(1, out) · J · diag(1, inn)`.
fn conjugate_action(j: &Mat2, inn: f64, out: f64) -> Mat2 {
    [
        [j[0][0], j[0][1] * inn],
        [out * j[1][0], out * j[1][1] * inn],
    ]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Central differences with one Richardson step, `h = 1e-6 · max(1, |x_i|)`.
pub fn finite_difference_jacobian<F>(f: F, point: [f64; 2]) -> Result<Mat2>
where
    F: Fn([f64; 2]) -> Result<[f64; 2]>,
{
    let mut jac = [[0.0; 2]; 2];
    for col in 0..2 {
        let h = 1e-6 * point[col].abs().max(1.0);
        let central = |h: f64| -> Result<[f64; 2]> {
            let mut plus = point;
            let mut minus = point;
            plus[col] += h;
            minus[col] -= h;
            let (fp, fm) = (f(plus)?, f(minus)?);
            Ok([(fp[0] - fm[0]) / (2.0 * h), (fp[1] - fm[1]) / (2.0 * h)])
        };
        let coarse = central(h)?;
        let fine = central(0.5 * h)?;
        for row in 0..2 {
            jac[row][col] = (4.0 * fine[row] - coarse[row]) / 3.0;
        }
    }
    Ok(jac)
}
