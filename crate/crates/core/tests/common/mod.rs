//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

/// Forcing evaluated straight from its coefficients.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub a0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Forcing {
    pub fn cosine() -> Self {
        Self {
            a0: 0.0,
            cos: vec![1.0],
            sin: vec![],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.a0;
        for (k, a) in self.cos.iter().enumerate() {
            v += a * ((k + 1) as f64 * t).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            v += b * ((k + 1) as f64 * t).sin();
        }
        v
    }
}

/// Right-hand side of `x'' = -s + ε p(t)` with `s = ±1` fixed.
fn rhs(f: &Forcing, eps: f64, s: f64, t: f64, u: [f64; 2]) -> [f64; 2] {
    [u[1], -s + eps * f.eval(t)]
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4) integration of one side's vector field from
/// `(t, x, y)` over a duration `tau`. Returns `(x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn dopri5(f: &Forcing, eps: f64, side: f64, t0: f64, x0: f64, y0: f64, tau: f64, tol: f64) -> (f64, f64) {
    let mut t = t0;
    let end = t0 + tau;
    let mut u = [x0, y0];
    let mut h = (tau / 100.0).max(1e-6);
    while t < end {
        if t + h > end {
            h = end - t;
        }
        let mut k = [[0.0; 2]; 7];
        for i in 0..7 {
            let mut ui = u;
            for j in 0..i {
                ui[0] += h * A[i][j] * k[j][0];
                ui[1] += h * A[i][j] * k[j][1];
            }
            k[i] = rhs(f, eps, side, t + C[i] * h, ui);
        }
        let mut u5 = u;
        let mut err = 0.0f64;
        for d in 0..2 {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for i in 0..7 {
                s5 += B5[i] * k[i][d];
                s4 += B4[i] * k[i][d];
            }
            u5[d] += h * s5;
            let scale = tol * (1.0 + u[d].abs().max(u5[d].abs()));
            err = err.max((h * (s5 - s4)).abs() / scale);
        }
        if err <= 1.0 {
            t += h;
            u = u5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    (u[0], u[1])
}

/// First zero of `x` after leaving the section at `(t, 0, y)`, located by
/// marching the oracle in small steps and bisecting the sign change.
pub fn oracle_impact_time(f: &Forcing, eps: f64, side: f64, t: f64, y: f64) -> f64 {
    let x_at = |tau: f64| dopri5(f, eps, side, t, 0.0, y, tau, 1e-13).0;
    let guess = 2.0 * y.abs();
    let step = guess / 64.0;
    let mut lo = step;
    while x_at(lo + step) * side > 0.0 {
        lo += step;
    }
    let mut hi = lo + step;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if x_at(mid) * side > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `min_{q ≤ q_max} q^ν ‖q x‖` by exhaustive scan, with `x = ω/2π`.
pub fn brute_margin(omega: f64, nu: f64, q_max: u64) -> (f64, u64) {
    let x = (omega / TAU).rem_euclid(1.0);
    let mut best = (f64::INFINITY, 0);
    for q in 1..=q_max {
        let qx = q as f64 * x;
        let d = (qx - qx.round()).abs();
        let g = (q as f64).powf(nu) * d;
        if g < best.0 {
            best = (g, q);
        }
    }
    best
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}
