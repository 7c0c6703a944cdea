//! TOML run configuration with schema validation.
//!
//! Every table rejects unknown keys. Range checks report the line of the
//! offending value.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

use crate::dynamics::{ForcingSpec, JacobianMode, Oscillator, RootMethod, DEFAULT_RHO, DEFAULT_Y_MIN};
use crate::fourier::golden_mean;
use crate::kam::KamOptions;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

fn line_of(source: &str, span: Range<usize>) -> usize {
    source[..span.start.min(source.len())].matches('\n').count() + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    #[serde(default)]
    pub a0: f64,
    #[serde(default = "default_cos")]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: Spanned<f64>,
}

fn default_cos() -> Vec<f64> {
    vec![1.0]
}

fn default_rho() -> Spanned<f64> {
    Spanned::new(0..0, DEFAULT_RHO)
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            a0: 0.0,
            cos: default_cos(),
            sin: Vec::new(),
            rho: default_rho(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub epsilon: Spanned<f64>,
    #[serde(default = "default_y_min")]
    pub y_min: f64,
    #[serde(default)]
    pub root_method: RootMethod,
}

fn default_y_min() -> f64 {
    DEFAULT_Y_MIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub t0: f64,
    pub y0: Spanned<f64>,
    pub n_impacts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactMapConfig {
    pub y_values: Vec<f64>,
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default)]
    pub jacobian: JacobianMode,
}

fn default_t_points() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    /// Base frequency; defaults to `2π` times the golden mean.
    #[serde(default)]
    pub omega0: Option<f64>,
    pub k_min: i64,
    pub k_max: Spanned<i64>,
    #[serde(default = "default_q_max")]
    pub q_max: u64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_q_max() -> u64 {
    crate::rotation::DEFAULT_Q_MAX
}

fn default_nu() -> f64 {
    2.0
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            omega0: None,
            k_min: 4,
            k_max: Spanned::new(0..0, 9),
            q_max: default_q_max(),
            nu: default_nu(),
        }
    }
}

impl LadderConfig {
    pub fn omega0(&self) -> f64 {
        self.omega0.unwrap_or(TAU * golden_mean())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KamConfig {
    #[serde(default = "default_order")]
    pub order: Spanned<usize>,
    #[serde(default)]
    pub tol: Option<Spanned<f64>>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub jacobian: JacobianMode,
    #[serde(default = "default_rotation_iterations")]
    pub rotation_iterations: usize,
}

fn default_order() -> Spanned<usize> {
    Spanned::new(0..0, 64)
}

fn default_max_iter() -> usize {
    crate::kam::DEFAULT_MAX_ITER
}

fn default_rotation_iterations() -> usize {
    2000
}

impl Default for KamConfig {
    fn default() -> Self {
        Self {
            order: default_order(),
            tol: None,
            max_iter: default_max_iter(),
            jacobian: JacobianMode::Analytic,
            rotation_iterations: default_rotation_iterations(),
        }
    }
}

impl KamConfig {
    pub fn options(&self) -> KamOptions {
        KamOptions {
            tol: self.tol.as_ref().map(|t| *t.get_ref()),
            max_iter: self.max_iter,
            rotation_iterations: self.rotation_iterations,
            ..KamOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindCurveConfig {
    pub k: i64,
    /// Overrides `ω_k`; the localization circle still follows `ω`.
    #[serde(default)]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub inner_k: i64,
    pub outer_k: Spanned<i64>,
    pub n_trials: usize,
    pub n_impacts: usize,
    /// Use flat circles instead of invariant curves (negative control).
    #[serde(default)]
    pub control: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_audit_y")]
    pub y_grid: Vec<f64>,
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default = "default_energy")]
    pub energy_level: Spanned<f64>,
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
}

fn default_audit_y() -> Vec<f64> {
    (0..20).map(|i| 6.0 + 74.0 * i as f64 / 19.0).collect()
}

fn default_energy() -> Spanned<f64> {
    Spanned::new(0..0, -50.0)
}

fn default_n_quad() -> usize {
    512
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            y_grid: default_audit_y(),
            t_points: default_t_points(),
            energy_level: default_energy(),
            n_quad: default_n_quad(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub forcing: ForcingConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub impact_map: Option<ImpactMapConfig>,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub kam: KamConfig,
    #[serde(default)]
    pub find_curve: Option<FindCurveConfig>,
    #[serde(default)]
    pub certify: Option<CertifyConfig>,
    #[serde(default)]
    pub audit: AuditConfig,
}

impl RunConfig {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(source, s)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate(source)?;
        Ok(cfg)
    }

    fn validate(&self, source: &str) -> Result<(), ConfigError> {
        let err = |span: Range<usize>, message: String| ConfigError {
            line: (span.end > 0).then(|| line_of(source, span)),
            message,
        };
        let eps = &self.model.epsilon;
        if !(*eps.get_ref() >= 0.0 && eps.get_ref().is_finite()) {
            return Err(err(eps.span(), format!("epsilon must be >= 0, got {}", eps.get_ref())));
        }
        if (self.forcing.a0 * eps.get_ref()).abs() >= 0.5 {
            return Err(err(eps.span(), "|a0 * epsilon| must stay below 1/2".into()));
        }
        let rho = &self.forcing.rho;
        if !(*rho.get_ref() > 0.0 && *rho.get_ref() < 1.0) {
            return Err(err(rho.span(), format!("rho must lie in (0, 1), got {}", rho.get_ref())));
        }
        if let Some(sim) = &self.simulate {
            if !(*sim.y0.get_ref() > self.model.y_min) {
                return Err(err(sim.y0.span(), format!("y0 must exceed y_min = {}", self.model.y_min)));
            }
        }
        if *self.ladder.k_max.get_ref() < self.ladder.k_min {
            return Err(err(self.ladder.k_max.span(), "k_max must be >= k_min".into()));
        }
        let order = &self.kam.order;
        if *order.get_ref() < 2 {
            return Err(err(order.span(), "order must be at least 2".into()));
        }
        if let Some(tol) = &self.kam.tol {
            if !(*tol.get_ref() > 0.0) {
                return Err(err(tol.span(), "tol must be positive".into()));
            }
        }
        if let Some(c) = &self.certify {
            if *c.outer_k.get_ref() <= c.inner_k {
                return Err(err(c.outer_k.span(), "outer_k must exceed inner_k".into()));
            }
        }
        let e = &self.audit.energy_level;
        if !(*e.get_ref() < -0.5 * self.model.y_min * self.model.y_min) {
            return Err(err(e.span(), "energy_level must be negative".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        *self.model.epsilon.get_ref()
    }

    pub fn forcing(&self) -> Result<ForcingSpec, ConfigError> {
        ForcingSpec::new(
            self.forcing.a0,
            self.forcing.cos.clone(),
            self.forcing.sin.clone(),
            *self.forcing.rho.get_ref(),
        )
        .map_err(|e| ConfigError {
            line: None,
            message: e.to_string(),
        })
    }

    pub fn oscillator(&self) -> Result<Oscillator, ConfigError> {
        Oscillator::new(self.forcing()?, self.epsilon())
            .map(|o| o.with_y_min(self.model.y_min).with_method(self.model.root_method))
            .map_err(|e| ConfigError {
                line: None,
                message: e.to_string(),
            })
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
