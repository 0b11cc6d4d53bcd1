//! Bessel potential kernels `G_a^d(s)`.
//!
//! `G_a^d(s) = (4π)^{-a/2} Γ(a/2)^{-1} ∫₀^∞ exp(-πs²/t - t/(4π)) t^{-1-(d-a)/2} dt`
//!
//! The integral is evaluated after the substitution `t = 2πs·e^u`, which
//! centres the integrand on the saddle of the two exponentials and leaves a
//! log-concave bump that decays double-exponentially in `u`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::quadrature::{log_line_integral, LineRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselSpec {
    pub a: f64,
    pub d: f64,
    pub quad_points: usize,
    pub quad_tol: f64,
}

impl BesselSpec {
    pub fn new(a: f64, d: f64) -> Self {
        Self {
            a,
            d,
            quad_points: 64,
            quad_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.d > 0.0) {
            return Err(Error::Domain(format!(
                "Bessel order and dimension must be positive (a = {}, d = {})",
                self.a, self.d
            )));
        }
        if !(self.quad_tol > 0.0 && self.quad_tol <= 1e-4) {
            return Err(Error::Domain(format!(
                "quad_tol must lie in (0, 1e-4], got {}",
                self.quad_tol
            )));
        }
        if self.quad_points < 32 {
            return Err(Error::Domain(format!(
                "quad_points must be at least 32, got {}",
                self.quad_points
            )));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        if self.a < self.d {
            Regime::ALessD
        } else if self.a > self.d {
            Regime::AGreaterD
        } else {
            Regime::AEqualD
        }
    }
}

/// Natural logarithm of `G_a^d(s)`. Stays finite where the value underflows.
pub fn bessel_log_eval(spec: &BesselSpec, s: f64) -> Result<f64> {
    spec.validate()?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("Bessel kernel needs s > 0, got {s}")));
    }
    let t_star = 2.0 * PI * s;
    let ln_t_star = t_star.ln();
    let power = 0.5 * (spec.d - spec.a);
    // t^{-1-power} dt = t^{-power} du
    let phi = |u: f64| {
        let t = t_star * u.exp();
        -PI * s * s / t - t / (4.0 * PI) - power * (ln_t_star + u)
    };
    let rule = LineRule {
        initial_points: spec.quad_points,
        // a stricter internal target keeps the doubling test below quad_tol
        tol: spec.quad_tol * 0.1,
        max_doublings: 14,
    };
    let ln_int = log_line_integral(phi, 0.0, rule)?;
    Ok(ln_int - 0.5 * spec.a * (4.0 * PI).ln() - ln_gamma(0.5 * spec.a))
}

/// `G_a^d(s)`. Returns 0 only when the true value is below the `f64` range.
pub fn bessel_eval(spec: &BesselSpec, s: f64) -> Result<f64> {
    Ok(bessel_log_eval(spec, s)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ALessD,
    AEqualD,
    AGreaterD,
}

impl Regime {
    /// Logarithm of the algebraic part of the envelope (without `e^{-cs}`).
    fn ln_base(self, a: f64, d: f64, s: f64) -> f64 {
        match self {
            Regime::ALessD => (a - d) * s.ln(),
            Regime::AEqualD => (1.0f64).max((1.0 / s).ln()).ln(),
            Regime::AGreaterD => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub regime: Regime,
    pub c_lower: f64,
    pub c_upper: f64,
    #[serde(rename = "C_lower")]
    pub big_c_lower: f64,
    #[serde(rename = "C_upper")]
    pub big_c_upper: f64,
    pub max_violation: f64,
}

const RATE_FLOOR: f64 = 1e-3;

/// Fits the two-sided envelope `C_l·env(s; c_l) ≤ G ≤ C_u·env(s; c_u)` on `s_grid`.
///
/// The rates are the extreme discrete decay rates of `G/base` over the last
/// decade of the grid, so the upper ratio is non-increasing and the lower ratio
/// non-decreasing there; the constants are then the grid max/min of the ratios.
pub fn envelope_check(spec: &BesselSpec, s_grid: &[f64]) -> Result<EnvelopeFit> {
    spec.validate()?;
    if s_grid.is_empty() {
        return Err(Error::Domain("empty s grid".into()));
    }
    if s_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("s grid must be strictly increasing".into()));
    }
    if s_grid.iter().any(|&s| !(s > 0.0 && s <= 50.0)) {
        return Err(Error::Domain("s grid entries must lie in (0, 50]".into()));
    }
    let regime = spec.regime();
    let ln_ratio: Vec<f64> = s_grid
        .iter()
        .map(|&s| Ok(bessel_log_eval(spec, s)? - regime.ln_base(spec.a, spec.d, s)))
        .collect::<Result<_>>()?;

    let s_last = *s_grid.last().unwrap();
    let mut first_tail = s_grid.iter().position(|&s| s >= s_last / 10.0).unwrap();
    if s_grid.len() >= 2 {
        first_tail = first_tail.min(s_grid.len() - 2);
    }
    let mut rate_min = f64::INFINITY;
    let mut rate_max = f64::NEG_INFINITY;
    for i in first_tail..s_grid.len().saturating_sub(1) {
        let rate = -(ln_ratio[i + 1] - ln_ratio[i]) / (s_grid[i + 1] - s_grid[i]);
        rate_min = rate_min.min(rate);
        rate_max = rate_max.max(rate);
    }
    if !rate_min.is_finite() {
        rate_min = RATE_FLOOR;
        rate_max = RATE_FLOOR;
    }
    let c_upper = rate_min.max(RATE_FLOOR);
    let c_lower = rate_max.max(c_upper);

    let upper: Vec<f64> = s_grid
        .iter()
        .zip(&ln_ratio)
        .map(|(&s, &l)| l + c_upper * s)
        .collect();
    let lower: Vec<f64> = s_grid
        .iter()
        .zip(&ln_ratio)
        .map(|(&s, &l)| l + c_lower * s)
        .collect();
    let ln_cu = upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_cl = lower.iter().cloned().fold(f64::INFINITY, f64::min);
    let big_c_upper = ln_cu.exp();
    let big_c_lower = ln_cl.exp();
    if !(big_c_upper.is_finite() && big_c_lower.is_finite() && big_c_lower > 0.0) {
        return Err(Error::FitFailure(format!(
            "no finite positive sandwich for (a, d) = ({}, {}): C_lower = {big_c_lower}, C_upper = {big_c_upper}",
            spec.a, spec.d
        )));
    }

    // Violation is measured in log space, so rounding at the extremal point
    // does not register.
    let mut max_violation: f64 = 0.0;
    for i in 0..s_grid.len() {
        let over = upper[i] - ln_cu;
        let under = ln_cl - lower[i];
        max_violation = max_violation.max(over.max(under).max(0.0));
    }
    Ok(EnvelopeFit {
        regime,
        c_lower,
        c_upper,
        big_c_lower,
        big_c_upper,
        max_violation,
    })
}

/// Log-spaced grid with `per_decade` points per decade on `[lo, hi]`, both ends included.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo * (hi / lo).powf(i as f64 / n as f64)
            }
        })
        .collect()
}

/// The default envelope grid: 16 points per decade over `(0.01, 20]`.
pub fn default_s_grid() -> Vec<f64> {
    log_grid(0.01, 20.0, 16)
}
