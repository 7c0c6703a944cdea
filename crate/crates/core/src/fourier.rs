//! Real trigonometric polynomials on the circle `R / 2πZ`.
//!
//! A [`PeriodicFn`] stores the non-negative half of a Hermitian coefficient
//! sequence, so `ĉ_{-k} = conj(ĉ_k)` holds by construction and point values
//! are always real. Products and compositions go through an oversampled grid
//! (4N points) and are truncated back to the working order.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

/// Averages above this are rejected by [`solve_cohomological`].
pub const DEFAULT_TOL_AVG: f64 = 1e-10;
/// Smallest admissible `|e^{ikω} - 1|`.
pub const DEFAULT_DIVISOR_FLOOR: f64 = 1e-12;
/// Back-substitution tolerance used by the verification helpers.
pub const DEFAULT_TOL_COH: f64 = 1e-9;
/// Default truncation order.
pub const DEFAULT_ORDER: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FourierError {
    #[error("right-hand side has nonzero average {average:e} (tolerance {tolerance:e})")]
    NonzeroAverage { average: f64, tolerance: f64 },
    #[error("small divisor |e^(ikω) - 1| = {divisor:e} at k = {k} (floor {floor:e})")]
    SmallDivisorBreakdown { k: usize, divisor: f64, floor: f64 },
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let plan = if inverse {
            planner.plan_fft_inverse(buf.len())
        } else {
            planner.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Equispaced grid `θ_j = 2πj/m`, `j = 0..m`.
pub fn grid(m: usize) -> Vec<f64> {
    (0..m).map(|j| TAU * j as f64 / m as f64).collect()
}

/// Grid size used for products at truncation order `n`.
pub fn oversampled_len(order: usize) -> usize {
    (4 * order).max(16)
}

/// Truncated real Fourier series `f(θ) = Σ_{|k|≤N} ĉ_k e^{ikθ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicFn {
    // ĉ_0 ..= ĉ_N; ĉ_0 is kept real.
    coeffs: Vec<Complex64>,
}

impl PeriodicFn {
    pub fn zeros(order: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); order + 1],
        }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut f = Self::zeros(order);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    /// Builds a function from `ĉ_0..=ĉ_N`. The imaginary part of `ĉ_0` is dropped.
    pub fn from_coeffs(mut coeffs: Vec<Complex64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        coeffs[0].im = 0.0;
        Self { coeffs }
    }

    /// `a0 + Σ_k (a_k cos kθ + b_k sin kθ)`, stored at order `max(order, K)`.
    pub fn from_cos_sin(a0: f64, cos: &[f64], sin: &[f64], order: usize) -> Self {
        let k_max = cos.len().max(sin.len());
        let mut f = Self::zeros(order.max(k_max));
        f.coeffs[0] = Complex64::new(a0, 0.0);
        for k in 1..=k_max {
            let a = cos.get(k - 1).copied().unwrap_or(0.0);
            let b = sin.get(k - 1).copied().unwrap_or(0.0);
            // a cos + b sin = Re((a - ib) e^{ikθ}), split over ±k.
            f.coeffs[k] = Complex64::new(0.5 * a, -0.5 * b);
        }
        f
    }

    pub fn cos_mode(k: usize, order: usize) -> Self {
        let mut cos = vec![0.0; k];
        if k == 0 {
            return Self::constant(1.0, order);
        }
        cos[k - 1] = 1.0;
        Self::from_cos_sin(0.0, &cos, &[], order)
    }

    pub fn sin_mode(k: usize, order: usize) -> Self {
        if k == 0 {
            return Self::zeros(order);
        }
        let mut sin = vec![0.0; k];
        sin[k - 1] = 1.0;
        Self::from_cos_sin(0.0, &[], &sin, order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Non-negative coefficients `ĉ_0..=ĉ_N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `ĉ_k` for any integer `k`; zero outside the stored band.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let idx = k.unsigned_abs() as usize;
        match self.coeffs.get(idx) {
            Some(c) if k >= 0 => *c,
            Some(c) => c.conj(),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Cosine/sine coefficients `(a_k, b_k)` for `k = 1..=N`.
    pub fn cos_sin(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let cos = self.coeffs[1..].iter().map(|c| 2.0 * c.re).collect();
        let sin = self.coeffs[1..].iter().map(|c| -2.0 * c.im).collect();
        (self.coeffs[0].re, cos, sin)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let theta = theta.rem_euclid(TAU);
        let step = Complex64::cis(theta);
        let mut z = step;
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            if k % 32 == 0 {
                z = Complex64::cis(k as f64 * theta);
            }
            acc += c.re * z.re - c.im * z.im;
            z *= step;
        }
        self.coeffs[0].re + 2.0 * acc
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| Complex64::new(0.0, k as f64) * c)
            .collect();
        Self { coeffs }
    }

    /// Zero-mean antiderivative of `f - ⟨f⟩`.
    pub fn antiderivative(&self) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            coeffs[k] = c / Complex64::new(0.0, k as f64);
        }
        Self { coeffs }
    }

    pub fn average(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `f - ⟨f⟩`.
    pub fn without_average(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[0] = Complex64::new(0.0, 0.0);
        f
    }

    /// `θ ↦ f(θ + ω)`.
    pub fn shift(&self, omega: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * Complex64::cis(k as f64 * omega))
            .collect();
        Self::from_coeffs(coeffs)
    }

    /// Truncates or zero-pads to `order`.
    pub fn with_order(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, Complex64::new(0.0, 0.0));
        Self { coeffs }
    }

    /// Drops the tail beyond the last coefficient with `|ĉ_k| > tol`.
    pub fn trimmed(&self, tol: f64) -> Self {
        let last = self
            .coeffs
            .iter()
            .rposition(|c| c.norm() > tol)
            .unwrap_or(0);
        self.with_order(last)
    }

    /// Values on [`grid`]`(m)`. Modes above `m/2` are folded, so pass
    /// `m ≥ 2N + 1` for exact sampling.
    pub fn samples(&self, m: usize) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (k, c) in self.coeffs.iter().enumerate() {
            if k == 0 {
                buf[0] += c;
                continue;
            }
            buf[k % m] += c;
            buf[(m - k % m) % m] += c.conj();
        }
        fft_in_place(&mut buf, true);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Interpolating coefficients of `values` (taken on [`grid`]), truncated
    /// to `order`. Requires `values.len() ≥ 2·order + 1` to avoid aliasing.
    pub fn from_samples(values: &[f64], order: usize) -> Self {
        let m = values.len();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_in_place(&mut buf, false);
        let scale = 1.0 / m as f64;
        let keep = order.min((m.saturating_sub(1)) / 2);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); order + 1];
        for k in 0..=keep {
            coeffs[k] = buf[k] * scale;
        }
        Self::from_coeffs(coeffs)
    }

    /// Pointwise product on the oversampled grid, truncated to `order`.
    pub fn product(&self, other: &Self, order: usize) -> Self {
        let m = oversampled_len(self.order().max(other.order()).max(order));
        let a = self.samples(m);
        let b = other.samples(m);
        let values: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_samples(&values, order)
    }

    /// Applies `op` pointwise on the oversampled grid.
    pub fn map_pointwise(&self, order: usize, op: impl Fn(f64) -> f64) -> Self {
        let m = oversampled_len(self.order().max(order));
        let values: Vec<f64> = self.samples(m).into_iter().map(op).collect();
        Self::from_samples(&values, order)
    }

    /// Coefficient majorant `Σ_k |ĉ_k| e^{|k|ρ}` of the sup-norm on the strip
    /// `|Im θ| < ρ`.
    pub fn strip_norm(&self, rho: f64) -> StripNorm {
        let mut value = self.coeffs[0].norm();
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            value += 2.0 * c.norm() * (k as f64 * rho).exp();
        }
        StripNorm { rho, value }
    }

    /// `max_j |f(θ_j)|` over [`grid`]`(m)`.
    pub fn grid_sup(&self, m: usize) -> f64 {
        self.samples(m).into_iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest coefficient difference `max_k |ĉ_k - d̂_k|` (orders may differ).
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let n = self.order().max(other.order()) as i64;
        (0..=n)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    /// Fits `log|ĉ_k| ≈ c - ρ k` over the modes above `floor` and returns the
    /// decay rate `ρ`, or `None` when fewer than three modes qualify.
    pub fn fitted_decay_rate(&self, floor: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| c.norm() > floor)
            .map(|(k, c)| (k as f64, c.norm().ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(-sxy / sxx)
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let n = self.order().max(other.order()) as i64;
        let coeffs = (0..=n).map(|k| op(self.coeff(k), other.coeff(k))).collect();
        Self::from_coeffs(coeffs)
    }
}

impl Add for &PeriodicFn {
    type Output = PeriodicFn;
    fn add(self, rhs: &PeriodicFn) -> PeriodicFn {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &PeriodicFn {
    type Output = PeriodicFn;
    fn sub(self, rhs: &PeriodicFn) -> PeriodicFn {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &PeriodicFn {
    type Output = PeriodicFn;
    fn mul(self, rhs: f64) -> PeriodicFn {
        PeriodicFn::from_coeffs(self.coeffs.iter().map(|c| c * rhs).collect())
    }
}

impl Neg for &PeriodicFn {
    type Output = PeriodicFn;
    fn neg(self) -> PeriodicFn {
        self * -1.0
    }
}

/// Upper estimate of `sup_{|Im θ|<ρ} |f(θ)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripNorm {
    pub rho: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohomologicalOptions {
    pub tol_avg: f64,
    pub divisor_floor: f64,
}

impl Default for CohomologicalOptions {
    fn default() -> Self {
        Self {
            tol_avg: DEFAULT_TOL_AVG,
            divisor_floor: DEFAULT_DIVISOR_FLOOR,
        }
    }
}

/// `e^{ikω} - 1` written as `2i sin(kω/2) e^{ikω/2}` to keep small divisors accurate.
pub fn difference_divisor(k: usize, omega: f64) -> Complex64 {
    let half = 0.5 * k as f64 * omega;
    Complex64::new(0.0, 2.0 * half.sin()) * Complex64::cis(half)
}

/// Zero-mean solution of `f(θ + ω) - f(θ) = g(θ)`.
pub fn solve_cohomological(
    g: &PeriodicFn,
    omega: f64,
    opts: &CohomologicalOptions,
) -> Result<PeriodicFn, FourierError> {
    let average = g.average();
    if average.abs() >= opts.tol_avg {
        return Err(FourierError::NonzeroAverage {
            average,
            tolerance: opts.tol_avg,
        });
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); g.coeffs.len()];
    for (k, c) in g.coeffs.iter().enumerate().skip(1) {
        // Resonant modes are harmless when g carries no content there.
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let d = difference_divisor(k, omega);
        if d.norm() <= opts.divisor_floor {
            return Err(FourierError::SmallDivisorBreakdown {
                k,
                divisor: d.norm(),
                floor: opts.divisor_floor,
            });
        }
        coeffs[k] = c / d;
    }
    Ok(PeriodicFn::from_coeffs(coeffs))
}

/// `max_j |f(θ_j + ω) - f(θ_j) - g(θ_j)|` on an `m`-point grid.
pub fn cohomological_residual(f: &PeriodicFn, g: &PeriodicFn, omega: f64, m: usize) -> f64 {
    grid(m)
        .into_iter()
        .map(|th| (f.eval(th + omega) - f.eval(th) - g.eval(th)).abs())
        .fold(0.0, f64::max)
}

/// Golden mean `(√5 - 1)/2`.
pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Wraps an angle into `(-π, π]`.
pub fn principal_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
