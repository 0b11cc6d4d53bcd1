//! Quadrature primitives shared by the kernel evaluators.
//!
//! [`log_line_integral`] integrates `exp(phi(u))` over the real line for a
//! concave `phi`, working in log space so that results far below the `f64`
//! range are still returned accurately as logarithms. [`tanh_sinh`] handles
//! finite intervals with endpoint singularities.

use crate::{Error, Result};

/// Log-space cutoff: samples more than this far below the peak are dropped.
const LOG_DROP: f64 = 45.0;
const SCAN_STEP: f64 = 0.5;
const MAX_SCAN_STEPS: usize = 4000;

/// Controls for [`log_line_integral`].
#[derive(Debug, Clone, Copy)]
pub struct LineRule {
    pub initial_points: usize,
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for LineRule {
    fn default() -> Self {
        Self {
            initial_points: 64,
            tol: 1e-12,
            max_doublings: 12,
        }
    }
}

/// Returns `ln ∫ exp(phi(u)) du` over ℝ for concave `phi`.
///
/// The support is located by marching outward from `u0` until `phi` drops
/// `LOG_DROP` below the running maximum, then the trapezoid rule is refined by
/// point doubling until two successive estimates agree to `rule.tol`.
pub fn log_line_integral<F: Fn(f64) -> f64>(phi: F, u0: f64, rule: LineRule) -> Result<f64> {
    let mut peak = phi(u0);
    if !peak.is_finite() {
        return Err(Error::Domain(format!("integrand not finite at u = {u0}")));
    }
    let scan = |dir: f64, peak: &mut f64| -> Result<f64> {
        let mut u = u0;
        for _ in 0..MAX_SCAN_STEPS {
            u += dir * SCAN_STEP;
            let v = phi(u);
            if v > *peak {
                *peak = v;
            } else if v < *peak - LOG_DROP || v == f64::NEG_INFINITY {
                return Ok(u);
            }
        }
        Err(Error::NonConvergence {
            what: "support scan of line integrand".into(),
            last_change: f64::NAN,
            tol: rule.tol,
        })
    };
    let hi = scan(1.0, &mut peak)?;
    let lo = scan(-1.0, &mut peak)?;

    let n0 = rule.initial_points.max(8);
    let mut h = (hi - lo) / n0 as f64;
    let mut sum = 0.0;
    for i in 0..=n0 {
        let w = if i == 0 || i == n0 { 0.5 } else { 1.0 };
        sum += w * (phi(lo + i as f64 * h) - peak).exp();
    }
    let mut estimate = sum * h;
    let mut n = n0;
    let mut last_change = f64::INFINITY;
    for _ in 0..rule.max_doublings {
        let mut mid = 0.0;
        for i in 0..n {
            mid += (phi(lo + (i as f64 + 0.5) * h) - peak).exp();
        }
        sum += mid;
        h *= 0.5;
        n *= 2;
        let next = sum * h;
        last_change = ((next - estimate) / next).abs();
        estimate = next;
        if last_change <= rule.tol {
            return Ok(estimate.ln() + peak);
        }
    }
    Err(Error::NonConvergence {
        what: "trapezoid refinement on the real line".into(),
        last_change,
        tol: rule.tol,
    })
}

/// Tanh-sinh (double exponential) quadrature of `f` over `[a, b]`.
///
/// `f` is never evaluated at the endpoints, so integrable endpoint
/// singularities are fine.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a < b) {
        if a == b {
            return Ok(0.0);
        }
        return Ok(-tanh_sinh(f, b, a, tol)?);
    }
    let half = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    // returns (contribution of the node pair at t, whether it was negligible)
    let pair = |t: f64| -> (f64, bool) {
        let u = half_pi * t.sinh();
        let e = (-2.0 * u).exp();
        let dist = half * 2.0 * e / (1.0 + e);
        let w = half * half_pi * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        if dist <= 0.0 || w < 1e-300 {
            return (0.0, true);
        }
        let left = a + dist;
        let right = b - dist;
        let mut s = 0.0;
        if left > a && left < b {
            s += f(left);
        }
        if right > a && right < b {
            s += f(right);
        }
        (w * s, false)
    };

    let t_max = 6.5;
    let mut h = 1.0;
    let mut sum = half * half_pi * f(a + half);
    let mut t = h;
    while t <= t_max {
        let (v, stop) = pair(t);
        if stop {
            break;
        }
        sum += v;
        t += h;
    }
    let mut estimate = sum * h;
    let mut last_change = f64::INFINITY;
    for _level in 0..12 {
        h *= 0.5;
        let mut t = h;
        let mut add = 0.0;
        while t <= t_max {
            let (v, stop) = pair(t);
            if stop {
                break;
            }
            add += v;
            t += 2.0 * h;
        }
        sum += add;
        let next = sum * h;
        last_change = (next - estimate).abs();
        estimate = next;
        if last_change <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence {
        what: "tanh-sinh refinement".into(),
        last_change,
        tol,
    })
}
