//! Weight functions and Schur-test integrals for low-energy kernel envelopes.
//!
//! A kernel envelope bounds the k-integrated kernel `h(x, y)` in terms of the
//! distances of `x` and `y` to the hub. [`threshold_scan`] evaluates
//! `∫ (∫ h^{p'} dμ_j)^{p/p'} dμ_i` over the radial ends by nested log-grid
//! quadrature and decides finiteness from the fitted tail exponents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::quadrature::tanh_sinh;
use crate::stats::fit_line;
use crate::{Error, Result};

/// `⟨d⟩ = (1 + d²)^{1/2}`.
pub fn japanese(d: f64) -> f64 {
    (1.0 + d * d).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Hub,
    End(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub a: u32,
    pub c: f64,
    pub dims: Vec<usize>,
}

/// `ω_a^c(x, k)`: 1 on the hub, `⟨d⟩^{-(n_i - a)} e^{-ckd}` on end `i`.
pub fn eval_weight(profile: &WeightProfile, loc: Location, d: f64, k: f64) -> Result<f64> {
    if !(d >= 0.0) || !(0.0..=1.0).contains(&k) {
        return Err(Error::Domain(format!("weight needs d >= 0, k in [0, 1] (d = {d}, k = {k})")));
    }
    match loc {
        Location::Hub => Ok(1.0),
        Location::End(i) => {
            let n = *profile
                .dims
                .get(i)
                .ok_or_else(|| Error::Domain(format!("no end {i}")))?;
            let e = n as f64 - profile.a as f64;
            Ok(japanese(d).powf(-e) * (-profile.c * k * d).exp())
        }
    }
}

/// `∫₀¹ k^s e^{-a k} dk` in closed form.
pub fn k_moment(s: f64, a: f64) -> f64 {
    if a < 1e-12 {
        return 1.0 / (s + 1.0);
    }
    gamma(s + 1.0) * gamma_lr(s + 1.0, a) / a.powf(s + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combiner {
    /// `⟨x⟩^α ⟨y⟩^β (∫₀¹ k^{2κ+m} e^{-2c k (d_x + d_y)} dk)^{1/2}`.
    Product,
    /// The k-integral replaced by `(d_x + d_y)^{-q}` and the decay put on either side.
    MinOfTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEnvelope {
    pub x_exponent: f64,
    pub y_exponent: f64,
    /// Power of `k` in the pointwise kernel bound.
    pub k_exponent: f64,
    /// Power of `k` in the spectral measure.
    pub k_measure: f64,
    pub rate: f64,
    pub combiner: Combiner,
}

impl KernelEnvelope {
    /// Gradient of the low-energy vertical kernel.
    pub fn h3(ni: usize, nj: usize, order: u32, combiner: Combiner) -> Self {
        let m = order as f64;
        Self {
            x_exponent: 1.0 - ni as f64,
            y_exponent: 2.0 - nj as f64,
            k_exponent: 2.0 - 2.0 * m,
            k_measure: 4.0 * m - 3.0,
            rate: 1.0,
            combiner,
        }
    }

    /// First horizontal kernel (order `M - 1` resolvent against `k^{4M-5}`).
    pub fn w1(ni: usize, nj: usize, order: u32, combiner: Combiner) -> Self {
        let m = order as f64;
        Self {
            x_exponent: 2.0 - ni as f64,
            y_exponent: 2.0 - nj as f64,
            k_exponent: 4.0 - 2.0 * m,
            k_measure: 4.0 * m - 5.0,
            rate: 1.0,
            combiner,
        }
    }

    /// Second horizontal kernel (order `M` resolvent against `k^{4M-1}`).
    pub fn w2(ni: usize, nj: usize, order: u32, combiner: Combiner) -> Self {
        let m = order as f64;
        Self {
            x_exponent: 2.0 - ni as f64,
            y_exponent: 2.0 - nj as f64,
            k_exponent: 2.0 - 2.0 * m,
            k_measure: 4.0 * m - 1.0,
            rate: 1.0,
            combiner,
        }
    }

    /// Total power of `k` inside the squared k-integral.
    pub fn k_power(&self) -> f64 {
        2.0 * self.k_exponent + self.k_measure
    }

    /// Decay in `d_x + d_y` left after the k-integral.
    pub fn q(&self) -> f64 {
        0.5 * (self.k_power() + 1.0)
    }

    /// Envelope at hub distances `dx`, `dy` (0 means the hub).
    pub fn eval(&self, dx: f64, dy: f64) -> f64 {
        self.ln_eval(dx, dy).exp()
    }

    pub fn ln_eval(&self, dx: f64, dy: f64) -> f64 {
        let lx = japanese(dx).ln();
        let ly = japanese(dy).ln();
        match self.combiner {
            Combiner::Product => {
                let mom = k_moment(self.k_power(), 2.0 * self.rate * (dx + dy));
                self.x_exponent * lx + self.y_exponent * ly + 0.5 * mom.ln()
            }
            Combiner::MinOfTwo => {
                let q = self.q();
                let a = (self.x_exponent - q) * lx + self.y_exponent * ly;
                let b = self.x_exponent * lx + (self.y_exponent - q) * ly;
                a.min(b)
            }
        }
    }

    /// `p` at which the inner integral over an end of dimension `nj` stops converging.
    pub fn predicted_inner_cutoff(&self, nj: usize) -> Option<f64> {
        let decay = self.q() - self.y_exponent;
        if decay <= 0.0 {
            return Some(1.0);
        }
        let p_dual = nj as f64 / decay;
        if p_dual <= 1.0 {
            None
        } else {
            Some(p_dual / (p_dual - 1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegralId {
    #[serde(rename = "KC1")]
    Kc1,
    #[serde(rename = "KC2")]
    Kc2,
    #[serde(rename = "KC3")]
    Kc3,
    #[serde(rename = "KC4-I1")]
    Kc4I1,
    #[serde(rename = "KC4-I2")]
    Kc4I2,
    #[serde(rename = "J1")]
    J1,
    #[serde(rename = "J2")]
    J2,
}

impl IntegralId {
    pub const ALL: [IntegralId; 7] = [
        IntegralId::Kc1,
        IntegralId::Kc2,
        IntegralId::Kc3,
        IntegralId::Kc4I1,
        IntegralId::Kc4I2,
        IntegralId::J1,
        IntegralId::J2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntegralId::Kc1 => "KC1",
            IntegralId::Kc2 => "KC2",
            IntegralId::Kc3 => "KC3",
            IntegralId::Kc4I1 => "KC4-I1",
            IntegralId::Kc4I2 => "KC4-I2",
            IntegralId::J1 => "J1",
            IntegralId::J2 => "J2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        IntegralId::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown integral id {s:?}")))
    }

    fn region(self) -> Region {
        match self {
            IntegralId::Kc1 => Region::HubHub,
            IntegralId::Kc2 => Region::EndHub,
            IntegralId::Kc3 => Region::HubEnd,
            IntegralId::Kc4I1 | IntegralId::J1 => Region::Near,
            IntegralId::Kc4I2 | IntegralId::J2 => Region::Far,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    HubHub,
    EndHub,
    HubEnd,
    /// `d_y ≥ d_x`
    Near,
    /// `d_y < d_x`
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Divergent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub p: f64,
    pub verdict: Verdict,
    /// Largest fitted tail exponent; `None` when no tail exists.
    pub tail_exponent: Option<f64>,
    pub inner_exponent: Option<f64>,
    pub outer_exponent: Option<f64>,
    /// The exponent lies within `TOL_EXP` of −1.
    pub inconclusive: bool,
    /// Value of the truncated integral (infinite once the inner part diverges).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub integral_id: IntegralId,
    pub ni: usize,
    pub nj: usize,
    pub envelope: KernelEnvelope,
    pub r_outer: f64,
    pub p_grid: Vec<f64>,
    pub rows: Vec<ThresholdRow>,
    pub detected_cutoff: Option<f64>,
    pub predicted_cutoff: Option<f64>,
}

pub const TOL_EXP: f64 = 0.02;
/// Exponents this close to −1 count as (logarithmically) divergent.
const LOG_DIVERGENCE: f64 = 1e-6;
pub const POINTS_PER_DECADE: usize = 48;
const FIT_DECADES: f64 = 2.0;

fn log_nodes(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = (((hi / lo).log10() * per_decade as f64).round() as usize).max(2);
    (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect()
}

/// Trapezoid in `ln r` of samples `g(r_i)·r_i`.
fn log_trapezoid(r: &[f64], g_times_r: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 1..r.len() {
        s += 0.5 * (g_times_r[i] + g_times_r[i - 1]) * (r[i] / r[i - 1]).ln();
    }
    s
}

/// Slope of `ln g` against `ln r` over the last `FIT_DECADES` decades.
fn tail_slope(r: &[f64], ln_g: &[f64]) -> f64 {
    let r_end = *r.last().unwrap();
    let start = r
        .iter()
        .position(|&v| v >= r_end / 10f64.powf(FIT_DECADES))
        .unwrap_or(0)
        .min(r.len() - 2);
    let x: Vec<f64> = r[start..].iter().map(|v| v.ln()).collect();
    fit_line(&x, &ln_g[start..]).map(|f| f.slope).unwrap_or(f64::NAN)
}

struct Evaluation {
    value: f64,
    inner_exponent: Option<f64>,
    outer_exponent: Option<f64>,
}

fn evaluate(env: &KernelEnvelope, region: Region, ni: usize, nj: usize, p: f64, r_outer: f64) -> Evaluation {
    let p_dual = p / (p - 1.0);
    let ratio = p / p_dual;
    let (nif, njf) = (ni as f64, nj as f64);
    // the inner grid spans a fixed number of decades past its lower limit
    let inner_span = r_outer * 100.0;
    let xs = log_nodes(1.0, r_outer, POINTS_PER_DECADE);

    // inner integrand per unit ln y: h^{p'} y^{nj}
    let inner_ln = |dx: f64, y: f64| p_dual * env.ln_eval(dx, y) + njf * y.ln();

    // ∫_{y ≥ lo} with power-law tail beyond the grid; None if it diverges
    let inner_from = |dx: f64, lo: f64| -> (f64, f64) {
        let r = log_nodes(lo, lo * inner_span, POINTS_PER_DECADE);
        let g: Vec<f64> = r.iter().map(|&y| inner_ln(dx, y)).collect();
        // slope of ln(g·y^{-1}) in ln y is the exponent of the integrand per dy
        let ln_per_dy: Vec<f64> = g.iter().zip(&r).map(|(v, y)| v - y.ln()).collect();
        let alpha = tail_slope(&r, &ln_per_dy);
        let vals: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let mut total = log_trapezoid(&r, &vals);
        if alpha < -1.0 {
            total += vals.last().unwrap() / (-1.0 - alpha);
        } else {
            total = f64::INFINITY;
        }
        (total, alpha)
    };

    match region {
        Region::HubHub => Evaluation {
            value: env.eval(0.0, 0.0),
            inner_exponent: None,
            outer_exponent: None,
        },
        Region::HubEnd => {
            let (v, alpha) = inner_from(0.0, 1.0);
            Evaluation {
                value: v.powf(ratio),
                inner_exponent: Some(alpha),
                outer_exponent: None,
            }
        }
        Region::EndHub => {
            let ln_o: Vec<f64> = xs.iter().map(|&x| p * env.ln_eval(x, 0.0) + nif * x.ln()).collect();
            let per_dx: Vec<f64> = ln_o.iter().zip(&xs).map(|(v, x)| v - x.ln()).collect();
            let vals: Vec<f64> = ln_o.iter().map(|v| v.exp()).collect();
            Evaluation {
                value: log_trapezoid(&xs, &vals),
                inner_exponent: None,
                outer_exponent: Some(tail_slope(&xs, &per_dx)),
            }
        }
        Region::Near | Region::Far => {
            let inner_vals: Vec<(f64, Option<f64>)> = xs
                .par_iter()
                .enumerate()
                .map(|(ix, &x)| match region {
                    Region::Near => {
                        let (v, a) = inner_from(x, x);
                        (v, Some(a))
                    }
                    _ => {
                        if ix == 0 {
                            return (0.0, None);
                        }
                        let r = log_nodes(1.0, x, POINTS_PER_DECADE);
                        let vals: Vec<f64> = r.iter().map(|&y| inner_ln(x, y).exp()).collect();
                        (log_trapezoid(&r, &vals), None)
                    }
                })
                .collect();
            let inner_exponent = inner_vals[0].1;
            if inner_vals.iter().any(|(v, _)| !v.is_finite()) {
                return Evaluation {
                    value: f64::INFINITY,
                    inner_exponent,
                    outer_exponent: None,
                };
            }
            // outer integrand per unit ln x: inner^{p/p'} x^{ni}
            let start = usize::from(region == Region::Far);
            let r = &xs[start..];
            let ln_o: Vec<f64> = inner_vals[start..]
                .iter()
                .zip(r)
                .map(|((v, _), x)| ratio * v.ln() + nif * x.ln())
                .collect();
            let per_dx: Vec<f64> = ln_o.iter().zip(r).map(|(v, x)| v - x.ln()).collect();
            let vals: Vec<f64> = ln_o.iter().map(|v| v.exp()).collect();
            Evaluation {
                value: log_trapezoid(r, &vals),
                inner_exponent,
                outer_exponent: Some(tail_slope(r, &per_dx)),
            }
        }
    }
}

fn row(env: &KernelEnvelope, region: Region, ni: usize, nj: usize, p: f64, r_outer: f64) -> ThresholdRow {
    let ev = evaluate(env, region, ni, nj, p, r_outer);
    let tail = match (ev.inner_exponent, ev.outer_exponent) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let (verdict, inconclusive) = match tail {
        None => (Verdict::Finite, false),
        Some(e) if e.is_nan() => (Verdict::Divergent, true),
        Some(e) => {
            let v = if e >= -1.0 - LOG_DIVERGENCE || !ev.value.is_finite() {
                Verdict::Divergent
            } else {
                Verdict::Finite
            };
            (v, (e + 1.0).abs() <= TOL_EXP)
        }
    };
    ThresholdRow {
        p,
        verdict,
        tail_exponent: tail,
        inner_exponent: ev.inner_exponent,
        outer_exponent: ev.outer_exponent,
        inconclusive,
        value: ev.value,
    }
}

/// Evaluates the Schur integral `id` for every `p` and bisects for the cutoff.
pub fn threshold_scan(
    envelope: &KernelEnvelope,
    id: IntegralId,
    ni: usize,
    nj: usize,
    p_grid: &[f64],
    r_outer: f64,
) -> Result<ThresholdReport> {
    if p_grid.is_empty() || p_grid.iter().any(|&p| !(p > 1.0 && p <= 20.0)) {
        return Err(Error::Domain("p grid must be nonempty and inside (1, 20]".into()));
    }
    if !(r_outer >= 1e6) {
        return Err(Error::Domain(format!("R_outer must be at least 1e6, got {r_outer}")));
    }
    if ni < 1 || nj < 1 {
        return Err(Error::Domain("end dimensions must be positive".into()));
    }
    let region = id.region();
    let rows: Vec<ThresholdRow> = p_grid
        .iter()
        .map(|&p| row(envelope, region, ni, nj, p, r_outer))
        .collect();

    let mut sorted: Vec<&ThresholdRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.p.partial_cmp(&b.p).unwrap());
    let mut detected = None;
    for w in sorted.windows(2) {
        if w[0].verdict == Verdict::Finite && w[1].verdict == Verdict::Divergent {
            let (mut lo, mut hi) = (w[0].p, w[1].p);
            for _ in 0..40 {
                if hi - lo < 1e-4 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if row(envelope, region, ni, nj, mid, r_outer).verdict == Verdict::Finite {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            detected = Some(0.5 * (lo + hi));
            break;
        }
    }
    let predicted_cutoff = match region {
        Region::HubEnd | Region::Near => envelope.predicted_inner_cutoff(nj),
        _ => None,
    };
    Ok(ThresholdReport {
        integral_id: id,
        ni,
        nj,
        envelope: *envelope,
        r_outer,
        p_grid: p_grid.to_vec(),
        rows,
        detected_cutoff: detected,
        predicted_cutoff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaFit {
    #[serde(rename = "M")]
    pub order: u32,
    pub kappa: f64,
    pub d_grid: Vec<f64>,
    /// `η(d) d^{4M-2}` per grid point.
    pub ratios: Vec<f64>,
}

/// `η(d) = ∫₀¹ k^{4M-3} e^{-kd} dk` by tanh-sinh quadrature.
pub fn eta(order: u32, d: f64) -> Result<f64> {
    let s = 4.0 * order as f64 - 3.0;
    // the integrand is below e^{-100} relative beyond k = 100/d
    let top = (100.0 / d).min(1.0);
    tanh_sinh(|k| k.powf(s) * (-k * d).exp(), 0.0, top, 1e-13)
}

/// Largest `κ` with `η(d) ≥ κ d^{-(4M-2)}` on `d_grid`.
pub fn eta_lower_bound(order: u32, d_grid: &[f64]) -> Result<EtaFit> {
    if order < 1 {
        return Err(Error::Domain("M must be at least 1".into()));
    }
    if d_grid.is_empty() || d_grid.iter().any(|&d| !(2.0..=1e4).contains(&d)) {
        return Err(Error::Domain("d grid must be nonempty and inside [2, 1e4]".into()));
    }
    let e = 4.0 * order as f64 - 2.0;
    let ratios: Vec<f64> = d_grid
        .iter()
        .map(|&d| Ok(eta(order, d)? * d.powf(e)))
        .collect::<Result<_>>()?;
    let kappa = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EtaFit {
        order,
        kappa,
        d_grid: d_grid.to_vec(),
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_examples() {
        let prof = WeightProfile {
            a: 2,
            c: 1.0,
            dims: vec![3, 4],
        };
        assert_eq!(eval_weight(&prof, Location::Hub, 5.0, 0.3).unwrap(), 1.0);
        let w = eval_weight(&prof, Location::End(0), 10.0, 0.0).unwrap();
        assert!((w - 101f64.powf(-0.5)).abs() < 1e-15);
        assert!(eval_weight(&prof, Location::End(0), 1.0, 2.0).is_err());
    }

    #[test]
    fn moment_matches_closed_form() {
        for a in [0.5f64, 3.0, 40.0] {
            let exact = (1.0 - (1.0 + a) * (-a).exp()) / (a * a);
            assert!((k_moment(1.0, a) / exact - 1.0).abs() < 1e-12);
        }
        assert_eq!(k_moment(3.0, 0.0), 0.25);
    }

    #[test]
    fn predicted_cutoffs() {
        let h = KernelEnvelope::h3(3, 4, 1, Combiner::Product);
        assert!((h.predicted_inner_cutoff(4).unwrap() - 4.0).abs() < 1e-12);
        let w = KernelEnvelope::w1(3, 4, 2, Combiner::MinOfTwo);
        assert_eq!(w.predicted_inner_cutoff(4), None);
    }

    #[test]
    fn id_roundtrip() {
        for id in IntegralId::ALL {
            assert_eq!(IntegralId::parse(id.name()).unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.name()));
        }
    }
}
