//! Diophantine margins, measured rotation numbers and the frequency ladder.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::dynamics::DynamicsError;
use crate::maps::AnnulusMap;

pub const DEFAULT_Q_MAX: u64 = 100_000;
/// Ladder rungs with `y₀* ≤ MIN_LADDER_Y0` are dropped.
pub const MIN_LADDER_Y0: f64 = 5.0;

/// `ω` together with the claimed constants of `|ω/2π - p/q| ≥ γ/q^ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencySpec {
    pub omega: f64,
    pub gamma: f64,
    pub nu: f64,
    pub q_max: u64,
}

impl FrequencySpec {
    /// Whether the inequality holds for every `q ≤ q_max`.
    pub fn holds(&self) -> bool {
        diophantine_margin(self.omega, self.nu, self.q_max).gamma_best >= self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiophantineMargin {
    /// `min_{q ≤ q_max} q^ν ‖q ω/2π‖`.
    pub gamma_best: f64,
    pub worst_q: u64,
}

fn dist_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Scans continued-fraction convergent denominators of `ω/2π`. Between two
/// consecutive convergents `q_n ≤ q < q_{n+1}` one has `‖qx‖ ≥ ‖q_n x‖`, so
/// the minimum of `q^ν‖qx‖` is always attained at a convergent.
pub fn diophantine_margin(omega: f64, nu: f64, q_max: u64) -> DiophantineMargin {
    let x = (omega / TAU).rem_euclid(1.0);
    let mut best = DiophantineMargin {
        gamma_best: dist_to_integer(x),
        worst_q: 1,
    };
    // q_{-1} = 0, q_0 = 1 with partial quotients of the fractional part.
    let (mut q_prev, mut q) = (0u64, 1u64);
    let mut r = x;
    loop {
        if r.abs() < 1e-300 {
            break;
        }
        let inv = 1.0 / r;
        let a = inv.floor();
        r = inv - a;
        if !(a.is_finite()) || a > q_max as f64 {
            break;
        }
        let Some(q_next) = (a as u64).checked_mul(q).and_then(|v| v.checked_add(q_prev)) else {
            break;
        };
        // q₁ = q₀ = 1 when the first partial quotient is 1; the scan goes on.
        if q_next > q_max {
            break;
        }
        let d = dist_to_integer(q_next as f64 * x);
        let g = (q_next as f64).powf(nu) * d;
        if g < best.gamma_best {
            best = DiophantineMargin {
                gamma_best: g,
                worst_q: q_next,
            };
        }
        (q_prev, q) = (q, q_next);
        if d < 1e-15 {
            break;
        }
    }
    best
}

/// Weighted Birkhoff estimate of the mean angular advance per iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationEstimate {
    /// Advance per iterate in radians.
    pub value: f64,
    /// `|full - first half|` of the weighted averages.
    pub error_estimate: f64,
    /// Unweighted mean for comparison.
    pub plain_average: f64,
}

impl RotationEstimate {
    /// Rotation number in turns (`value / 2π`).
    pub fn turns(&self) -> f64 {
        self.value / TAU
    }
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

fn weighted_average(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let w = bump((i as f64 + 0.5) / n);
        num += w * v;
        den += w;
    }
    num / den
}

/// Iterates `map` from `start` and averages the lifted angle increments with
/// smooth bump weights. The state angle is reduced modulo `2π` between
/// steps, so the map must be `2π`-periodic in the angle.
pub fn rotation_number<M: AnnulusMap + ?Sized>(
    map: &M,
    start: [f64; 2],
    n_iter: usize,
) -> Result<RotationEstimate, DynamicsError> {
    assert!(n_iter >= 2, "need at least two iterates");
    let mut p = [start[0].rem_euclid(TAU), start[1]];
    let mut increments = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let q = map.apply(p)?;
        increments.push(q[0] - p[0]);
        p = [q[0].rem_euclid(TAU), q[1]];
    }
    let value = weighted_average(&increments);
    let half = weighted_average(&increments[..n_iter / 2]);
    Ok(RotationEstimate {
        value,
        error_estimate: (value - half).abs(),
        plain_average: increments.iter().sum::<f64>() / n_iter as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderRung {
    pub k: i64,
    pub omega: f64,
    pub y0_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ladder {
    pub rungs: Vec<LadderRung>,
    /// Rungs removed because `y₀* ≤ 5`.
    pub filtered: Vec<LadderRung>,
}

/// `ω_k = ω₀ + 2πk` and the matching circle `y₀* = ω_k (1 - a₀²ε²)/4`.
pub fn frequency_ladder(
    epsilon: f64,
    a0: f64,
    omega0: f64,
    k_range: std::ops::RangeInclusive<i64>,
) -> Ladder {
    let den = 1.0 - (a0 * epsilon).powi(2);
    let (rungs, filtered) = k_range
        .map(|k| {
            let omega = omega0 + TAU * k as f64;
            LadderRung {
                k,
                omega,
                y0_star: omega * den / 4.0,
            }
        })
        .partition(|r| r.y0_star > MIN_LADDER_Y0);
    Ladder { rungs, filtered }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::golden_mean;
    use crate::maps::AffineTwist;

    #[test]
    fn golden_margin() {
        let m = diophantine_margin(TAU * golden_mean(), 2.0, 10_000);
        assert_eq!(m.worst_q, 1);
        assert!((m.gamma_best - (1.0 - golden_mean())).abs() < 1e-12);
    }

    #[test]
    fn leading_unit_quotient() {
        // x = 0.66…: a₁ = 1, so the scan must continue past q = 1.
        let m = diophantine_margin(TAU * 0.6644289036582297, 1.0, 2000);
        assert!(m.worst_q > 1);
        assert!(m.gamma_best < 0.02);
    }

    #[test]
    fn rational_margin_collapses() {
        let m = diophantine_margin(TAU / 3.0, 2.0, 10_000);
        assert_eq!(m.worst_q, 3);
        assert!(m.gamma_best < 1e-12);
    }

    #[test]
    fn ladder_values() {
        let l = frequency_ladder(0.0, 0.0, TAU * golden_mean(), 4..=4);
        assert!((l.rungs[0].y0_star - (TAU * golden_mean() + 8.0 * std::f64::consts::PI) / 4.0).abs() < 1e-14);
        assert!((l.rungs[0].y0_star - 7.25).abs() < 0.01);
        let a = frequency_ladder(0.0, 1.0, 1.0, 4..=4).rungs[0].y0_star;
        let b = frequency_ladder(0.1, 1.0, 1.0, 4..=4).rungs[0].y0_star;
        assert!((b / a - 0.99).abs() < 1e-14);
        let l = frequency_ladder(0.0, 0.0, 1.0, 0..=5);
        assert!(l.filtered.iter().all(|r| r.y0_star <= 5.0));
        assert_eq!(l.rungs.len() + l.filtered.len(), 6);
    }

    #[test]
    fn rigid_rotation() {
        let m = AffineTwist {
            alpha0: 0.7,
            slope: 0.0,
        };
        let r = rotation_number(&m, [0.1, 0.0], 1000).unwrap();
        assert!((r.value - 0.7).abs() < 1e-12);
    }
}
