//! Fourier split of the resolvent symbol `(λ² + k²)^{-M}` into a part whose
//! transform lives in `|ξ| ≤ r` and a remainder that is exponentially small in `kr`.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::stats::fit_line;
use crate::{Error, Result};

pub const MAX_ORDER: u32 = 4;
pub const MIN_FFT_POINTS: usize = 1 << 14;
pub const MAX_FFT_POINTS: usize = 1 << 22;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const ALIAS_TOL: f64 = 1e-12;

/// `coef · k^a · |ξ|^b · e^{-k|ξ|}`
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    a: i32,
    b: i32,
    coef: f64,
}

/// The transform `∫ e^{-iξλ} (λ² + k²)^{-M} dλ` as a sum of [`Term`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTransform {
    order: u32,
    terms: Vec<Term>,
}

impl SymbolTransform {
    pub fn new(order: u32) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Unsupported(format!("M = {order} (supported: 1..={MAX_ORDER})")));
        }
        let mut terms = vec![Term { a: -1, b: 0, coef: PI }];
        for m in 1..order {
            // T_{m+1} = -(1/(2km)) ∂_k T_m
            let mut next: Vec<Term> = Vec::new();
            let mut push = |t: Term| match next.iter_mut().find(|u| u.a == t.a && u.b == t.b) {
                Some(u) => u.coef += t.coef,
                None => next.push(t),
            };
            let m = m as f64;
            for t in &terms {
                push(Term {
                    a: t.a - 2,
                    b: t.b,
                    coef: -(t.a as f64) * t.coef / (2.0 * m),
                });
                push(Term {
                    a: t.a - 1,
                    b: t.b + 1,
                    coef: t.coef / (2.0 * m),
                });
            }
            terms = next;
        }
        terms.sort_by_key(|t| (t.b, t.a));
        Ok(Self { order, terms })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn eval(&self, k: f64, xi: f64) -> f64 {
        let x = xi.abs();
        let poly: f64 = self
            .terms
            .iter()
            .map(|t| t.coef * k.powi(t.a) * x.powi(t.b))
            .sum();
        poly * (-k * x).exp()
    }
}

/// Values of the transform of `λ ↦ (λ² + k²)^{-M}` on `xi_grid`.
pub fn fm_eval(order: u32, k: f64, xi_grid: &[f64]) -> Result<Vec<f64>> {
    if !(k >= 1.0) {
        return Err(Error::Domain(format!("k must be at least 1, got {k}")));
    }
    let t = SymbolTransform::new(order)?;
    Ok(xi_grid.iter().map(|&x| t.eval(k, x)).collect())
}

/// `6s⁵ - 15s⁴ + 10s³`; second derivative vanishes at both ends.
fn smootherstep(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// C² window: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn eta(t: f64) -> f64 {
    let t = t.abs();
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = 2.0 * (t - 0.5);
        1.0 - smootherstep(s)
    }
}

/// `1 - η`, computed without cancellation near the plateau.
fn eta_complement(t: f64) -> f64 {
    let t = t.abs();
    if t <= 0.5 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let s = 2.0 * (t - 0.5);
        smootherstep(s)
    }
}

pub fn resolvent_symbol(order: u32, k: f64, lambda: f64) -> f64 {
    (lambda * lambda + k * k).powi(-(order as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(rename = "M")]
    pub order: u32,
    pub r: f64,
    pub k: f64,
    /// Minimum transform size; raised automatically when accuracy needs it.
    pub fft_points: usize,
    pub lambda_max: f64,
}

impl SplitSpec {
    pub fn new(order: u32, r: f64, k: f64) -> Self {
        Self {
            order,
            r,
            k,
            fft_points: MIN_FFT_POINTS,
            lambda_max: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(Error::Unsupported(format!("M = {}", self.order)));
        }
        if !(self.r > 0.0) || !(self.k >= 1.0) || !(self.lambda_max > 0.0) {
            return Err(Error::Domain(format!(
                "need r > 0, k >= 1, lambda_max > 0 (r = {}, k = {}, lambda_max = {})",
                self.r, self.k, self.lambda_max
            )));
        }
        if !self.fft_points.is_power_of_two() || self.fft_points < MIN_FFT_POINTS {
            return Err(Error::Domain(format!(
                "fft_points must be a power of two >= {MIN_FFT_POINTS}, got {}",
                self.fft_points
            )));
        }
        Ok(())
    }

    /// Smallest `ξ` range covering the required span and the decay of `e^{-kξ}`.
    pub fn xi_cover(&self) -> f64 {
        (20.0 * self.k.max(1.0)).max(45.0 / self.k).max(self.r)
    }
}

/// Transform grid chosen for a [`SplitSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitGrid {
    pub points: usize,
    pub d_xi: f64,
    pub d_lambda: f64,
    pub xi_max: f64,
    /// Period of the sampled symbol in `λ`.
    pub period: f64,
}

fn zeta_even(s: u32) -> f64 {
    (1..10_000).map(|n| (n as f64).powi(-(s as i32))).sum()
}

/// Picks the period from the periodization error and the point count from the `ξ` cover.
pub fn choose_grid(spec: &SplitSpec) -> Result<SplitGrid> {
    spec.validate()?;
    let m = spec.order;
    // images at distance L contribute about 2ζ(2M) L^{-2M} k^0 near λ = 0
    let alias_budget = 0.1 * RECONSTRUCTION_TOL;
    let period_needed = (2.0 * zeta_even(2 * m) / alias_budget).powf(1.0 / (2.0 * m as f64));
    // the window's third-derivative jumps make G and H decay like J λ^{-4}
    let t = SymbolTransform::new(m)?;
    let jump = 480.0 / spec.r.powi(3) * t.eval(spec.k, 0.5 * spec.r);
    let window_period = (2.0 * jump / (PI * 0.01 * RECONSTRUCTION_TOL)).powf(0.25);
    let period = period_needed.max(window_period).max(4.0 * spec.lambda_max);
    let cover = spec.xi_cover();
    let needed = (cover * period / PI).ceil() as usize;
    let points = needed.next_power_of_two().max(spec.fft_points);
    if points > MAX_FFT_POINTS {
        return Err(Error::GridRejected(format!(
            "transform would need {points} points (max {MAX_FFT_POINTS})"
        )));
    }
    let d_xi = 2.0 * PI / period;
    let xi_max = 0.5 * points as f64 * d_xi;
    let grid = SplitGrid {
        points,
        d_xi,
        d_lambda: period / points as f64,
        xi_max,
        period,
    };
    let edge = t.eval(spec.k, xi_max) / t.eval(spec.k, 0.0);
    if edge > ALIAS_TOL {
        return Err(Error::GridRejected(format!(
            "transform tail {edge:.3e} at the grid edge exceeds {ALIAS_TOL:e}"
        )));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub spec: SplitSpec,
    pub grid: SplitGrid,
    /// Native transform grid, cropped to `|λ| ≤ lambda_max`.
    pub lambda: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// `max |G + H - (λ² + k²)^{-M}|` over the cropped grid.
    pub reconstruction_error: f64,
    /// `max |Ĥ(ξ)|` over `|ξ| ≤ r/2`, recomputed from the samples of `H`.
    pub h_hat_inner_max: f64,
}

fn centered_sign(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `G` and `H` by inverse transform of the windowed symbol transform.
pub fn split_eval(spec: &SplitSpec) -> Result<SplitResult> {
    let grid = choose_grid(spec)?;
    let n = grid.points;
    let half = (n / 2) as f64;
    let t = SymbolTransform::new(spec.order)?;
    let mut planner = FftPlanner::<f64>::new();
    let inverse = planner.plan_fft_inverse(n);
    let forward = planner.plan_fft_forward(n);

    let xi_at = |j: usize| (j as f64 - half) * grid.d_xi;
    let lambda_at = |m: usize| (m as f64 - half) * grid.d_lambda;

    let mut g_buf: Vec<Complex64> = Vec::with_capacity(n);
    let mut h_buf: Vec<Complex64> = Vec::with_capacity(n);
    for j in 0..n {
        let xi = xi_at(j);
        let tv = t.eval(spec.k, xi) * centered_sign(j);
        let w = xi / spec.r;
        g_buf.push(Complex64::new(tv * eta(w), 0.0));
        h_buf.push(Complex64::new(tv * eta_complement(w), 0.0));
    }
    inverse.process(&mut g_buf);
    inverse.process(&mut h_buf);
    let scale = grid.d_xi / (2.0 * PI);
    let g_all: Vec<f64> = g_buf.iter().enumerate().map(|(m, z)| z.re * scale * centered_sign(m)).collect();
    let h_all: Vec<f64> = h_buf.iter().enumerate().map(|(m, z)| z.re * scale * centered_sign(m)).collect();

    // forward transform of H back to ξ
    let mut hh: Vec<Complex64> = h_all
        .iter()
        .enumerate()
        .map(|(m, &v)| Complex64::new(v * centered_sign(m), 0.0))
        .collect();
    forward.process(&mut hh);
    let mut h_hat_inner_max: f64 = 0.0;
    for (j, z) in hh.iter().enumerate() {
        if xi_at(j).abs() <= 0.5 * spec.r {
            h_hat_inner_max = h_hat_inner_max.max((z * grid.d_lambda * centered_sign(j)).norm());
        }
    }

    let mut lambda = Vec::new();
    let mut g = Vec::new();
    let mut h = Vec::new();
    let mut reconstruction_error: f64 = 0.0;
    for m in 0..n {
        let l = lambda_at(m);
        if l.abs() <= spec.lambda_max {
            let err = (g_all[m] + h_all[m] - resolvent_symbol(spec.order, spec.k, l)).abs();
            reconstruction_error = reconstruction_error.max(err);
            lambda.push(l);
            g.push(g_all[m]);
            h.push(h_all[m]);
        }
    }
    Ok(SplitResult {
        spec: *spec,
        grid,
        lambda,
        g,
        h,
        reconstruction_error,
        h_hat_inner_max,
    })
}

/// Composite Simpson nodes and weights on `[a, b]` with at least `panels` panels.
fn simpson(a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = 2 * panels.max(1);
    let h = (b - a) / n as f64;
    let mut x = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n + 1);
    for i in 0..=n {
        x.push(a + i as f64 * h);
        let c = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w.push(c * h / 3.0);
    }
    (x, w)
}

/// `H(λ) = π^{-1} ∫_{r/2}^∞ T(ξ)(1 - η(ξ/r)) cos(ξλ) dξ` by direct quadrature.
pub fn h_direct(order: u32, r: f64, k: f64, lambdas: &[f64]) -> Result<Vec<f64>> {
    let t = SymbolTransform::new(order)?;
    let lmax = lambdas.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let scale = k.max(1.0).max(lmax).max(1.0 / r);
    let step = 0.005 / scale;
    let top = r + 80.0 / k;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b) in [(0.5 * r, r), (r, top)] {
        let (x, w) = simpson(a, b, ((b - a) / step).ceil() as usize);
        for (xi, wi) in x.into_iter().zip(w) {
            let v = t.eval(k, xi) * eta_complement(xi / r);
            nodes.push(xi);
            weights.push(wi * v);
        }
    }
    Ok(lambdas
        .iter()
        .map(|&l| nodes.iter().zip(&weights).map(|(x, w)| w * (x * l).cos()).sum::<f64>() / PI)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupSample {
    pub r: f64,
    pub k: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
    /// `max |sup / (C e^{-ckr}) - 1|` over the samples.
    pub max_deviation: f64,
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSupFit {
    #[serde(rename = "M")]
    pub order: u32,
    pub fit: ExpFit,
    /// Same fit after multiplying each sup by `k^{2M}`.
    pub scaled_fit: ExpFit,
    pub pass: bool,
    /// The `(r, k)` with the worst deviation when the fit fails.
    pub offending: Option<(f64, f64)>,
    pub samples: Vec<SupSample>,
}

pub const H_FIT_MAX_DEVIATION: f64 = 0.25;
pub const H_FIT_MIN_RATE: f64 = 0.3;

fn exp_fit(samples: &[SupSample], weight: impl Fn(&SupSample) -> f64) -> Result<ExpFit> {
    let x: Vec<f64> = samples.iter().map(|s| s.k * s.r).collect();
    let y: Vec<f64> = samples.iter().map(|s| (s.sup * weight(s)).ln()).collect();
    let line = fit_line(&x, &y).ok_or_else(|| Error::FitFailure("degenerate (r, k) grid".into()))?;
    let big_c = line.intercept.exp();
    let c = -line.slope;
    let mut max_deviation: f64 = 0.0;
    let mut worst = (samples[0].r, samples[0].k);
    for (s, (&xi, &yi)) in samples.iter().zip(x.iter().zip(&y)) {
        let dev = ((yi - line.intercept - line.slope * xi).exp() - 1.0).abs();
        if dev > max_deviation {
            max_deviation = dev;
            worst = (s.r, s.k);
        }
    }
    Ok(ExpFit {
        big_c,
        c,
        max_deviation,
        worst,
    })
}

/// Fits `log sup_λ |H| ≈ log C - c·kr` over the `(r, k)` grid.
pub fn h_sup_bound(order: u32, r_grid: &[f64], k_grid: &[f64]) -> Result<HSupFit> {
    SymbolTransform::new(order)?;
    if r_grid.iter().any(|&r| !(1.0..=8.0).contains(&r)) || k_grid.iter().any(|&k| !(1.0..=10.0).contains(&k)) {
        return Err(Error::Domain("r grid must lie in [1, 8] and k grid in [1, 10]".into()));
    }
    if r_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::Domain("empty (r, k) grid".into()));
    }
    let lambdas: Vec<f64> = (0..=16).map(|i| 0.125 * i as f64).collect();
    let pairs: Vec<(f64, f64)> = r_grid.iter().flat_map(|&r| k_grid.iter().map(move |&k| (r, k))).collect();
    let samples: Vec<SupSample> = pairs
        .par_iter()
        .map(|&(r, k)| {
            let vals = h_direct(order, r, k, &lambdas)?;
            let sup = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            Ok(SupSample { r, k, sup })
        })
        .collect::<Result<_>>()?;
    let fit = exp_fit(&samples, |_| 1.0)?;
    let scaled_fit = exp_fit(&samples, |s| s.k.powi(2 * order as i32))?;
    let pass = fit.c >= H_FIT_MIN_RATE && fit.max_deviation <= H_FIT_MAX_DEVIATION;
    Ok(HSupFit {
        order,
        fit,
        scaled_fit,
        pass,
        offending: (!pass).then_some(fit.worst),
        samples,
    })
}
