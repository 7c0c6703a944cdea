//! Annulus maps `(angle, action) ↦ (angle′, action′)` with Jacobians.
//!
//! Angles are lifts: `apply` never reduces its angular output modulo `2π`,
//! so `angle′ - angle` is the true advance.

use crate::dynamics::{
    DynamicsError, ImpactPoint, JacobianMode, MapKind, Mat2, Oscillator, ScaledMapSpec,
};

pub trait AnnulusMap: Sync {
    fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], DynamicsError>;

    fn jacobian(&self, p: [f64; 2]) -> Result<Mat2, DynamicsError>;

    /// Unperturbed angular advance `α(I)`, used to seed curves.
    fn twist(&self, action: f64) -> f64;

    /// An action inside the domain where the twist inversion starts.
    fn reference_action(&self) -> f64;

    /// Solves `α(I) = ω` by a secant iteration from [`Self::reference_action`].
    fn action_for_frequency(&self, omega: f64) -> Option<f64> {
        let mut i0 = self.reference_action();
        let mut i1 = i0 + 1e-3 * i0.abs().max(1.0);
        let (mut f0, mut f1) = (self.twist(i0) - omega, self.twist(i1) - omega);
        for _ in 0..100 {
            if f1 == 0.0 {
                return Some(i1);
            }
            let slope = (f1 - f0) / (i1 - i0);
            if slope == 0.0 || !slope.is_finite() {
                return None;
            }
            let next = i1 - f1 / slope;
            (i0, f0) = (i1, f1);
            i1 = next;
            f1 = self.twist(i1) - omega;
            if (i1 - i0).abs() <= 1e-15 * i1.abs().max(1.0) {
                return Some(i1);
            }
        }
        None
    }
}

/// Chirikov standard map `I′ = I + K sin φ`, `φ′ = φ + I′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardMap {
    pub k: f64,
}

impl AnnulusMap for StandardMap {
    fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        let i = p[1] + self.k * p[0].sin();
        Ok([p[0] + i, i])
    }

    fn jacobian(&self, p: [f64; 2]) -> Result<Mat2, DynamicsError> {
        let kc = self.k * p[0].cos();
        Ok([[1.0 + kc, 1.0], [kc, 1.0]])
    }

    fn twist(&self, action: f64) -> f64 {
        action
    }

    fn reference_action(&self) -> f64 {
        1.0
    }
}

/// Integrable twist `φ′ = φ + α(I)`, `I′ = I`, with affine `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTwist {
    pub alpha0: f64,
    pub slope: f64,
}

impl AnnulusMap for AffineTwist {
    fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        Ok([p[0] + self.twist(p[1]), p[1]])
    }

    fn jacobian(&self, _p: [f64; 2]) -> Result<Mat2, DynamicsError> {
        Ok([[1.0, self.slope], [0.0, 1.0]])
    }

    fn twist(&self, action: f64) -> f64 {
        self.alpha0 + self.slope * action
    }

    fn reference_action(&self) -> f64 {
        0.0
    }
}

/// The impact map in `(t₀, y₀)`.
#[derive(Debug, Clone)]
pub struct VelocityImpactMap {
    pub oscillator: Oscillator,
    pub mode: JacobianMode,
}

impl AnnulusMap for VelocityImpactMap {
    fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        let out = self.oscillator.impact_map(ImpactPoint::new(p[0], p[1]))?;
        Ok([out.t_bar, out.y_bar])
    }

    fn jacobian(&self, p: [f64; 2]) -> Result<Mat2, DynamicsError> {
        self.oscillator.jacobian(MapKind::Impact, p, self.mode)
    }

    fn twist(&self, action: f64) -> f64 {
        self.oscillator.alpha(action)
    }

    fn reference_action(&self) -> f64 {
        10.0
    }
}

/// The impact map in `(t₀, E₀)`.
#[derive(Debug, Clone)]
pub struct EnergyImpactMap {
    pub oscillator: Oscillator,
    pub mode: JacobianMode,
}

impl AnnulusMap for EnergyImpactMap {
    fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        let out = self.oscillator.impact_map_energy(p[0], p[1])?;
        Ok([out.t_bar, out.e_bar])
    }

    fn jacobian(&self, p: [f64; 2]) -> Result<Mat2, DynamicsError> {
        self.oscillator.jacobian(MapKind::ImpactEnergy, p, self.mode)
    }

    fn twist(&self, action: f64) -> f64 {
        self.oscillator.alpha_energy(action)
    }

    fn reference_action(&self) -> f64 {
        -50.0
    }
}

/// The localized map `F(φ, I)` around `y₀ = y₀*`.
#[derive(Debug, Clone)]
pub struct ScaledImpactMap {
    pub oscillator: Oscillator,
    pub spec: ScaledMapSpec,
    pub mode: JacobianMode,
}

impl ScaledImpactMap {
    pub fn new(oscillator: Oscillator, y0_star: f64) -> Self {
        let spec = ScaledMapSpec::new(y0_star, oscillator.epsilon());
        Self {
            oscillator,
            spec,
            mode: JacobianMode::Analytic,
        }
    }

    /// `|α′(I₀*)|`.
    pub fn twist_strength(&self) -> f64 {
        self.oscillator
            .scaled_alpha_prime(&self.spec, self.spec.i0_star())
            .abs()
    }
}

impl AnnulusMap for ScaledImpactMap {
    fn apply(&self, p: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        let out = self.oscillator.scaled_map(&self.spec, p[0], p[1])?;
        Ok([out.phi_bar, out.i_bar])
    }

    fn jacobian(&self, p: [f64; 2]) -> Result<Mat2, DynamicsError> {
        self.oscillator
            .jacobian(MapKind::Scaled(self.spec), p, self.mode)
    }

    fn twist(&self, action: f64) -> f64 {
        self.oscillator.scaled_alpha(&self.spec, action)
    }

    fn reference_action(&self) -> f64 {
        self.spec.i0_star()
    }
}
