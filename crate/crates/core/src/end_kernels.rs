//! Resolvent kernels `(Δ + k²)^{-j}` on model ends `ℝ^n × T^m`.
//!
//! The free `ℝ^N` kernel is the subordination integral
//! `(j-1)!^{-1} ∫₀^∞ t^{j-1} e^{-tk²} (4πt)^{-N/2} e^{-r²/(4t)} dt`, and the
//! flat torus factor is handled by summing images over the period lattice
//! shell by shell. When `kL` is small the images decay only algebraically, and
//! the dual sum over torus modes (free `ℝ^n` kernels with mass
//! `√(k² + |2πν/L|²)`) is used instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::bessel::{bessel_log_eval, BesselSpec};
use crate::quadrature::{log_line_integral, LineRule};
use crate::stats::fit_line;
use crate::{Error, Result};

const SHELL_REL_TOL: f64 = 1e-12;
const MAX_SHELLS: usize = 64;
const MAX_MODE_SHELLS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndGeometry {
    pub n: usize,
    pub m: usize,
    pub torus_circumferences: Vec<f64>,
}

impl EndGeometry {
    pub fn euclidean(n: usize) -> Self {
        Self {
            n,
            m: 0,
            torus_circumferences: Vec::new(),
        }
    }

    pub fn with_torus(n: usize, circumferences: Vec<f64>) -> Self {
        Self {
            n,
            m: circumferences.len(),
            torus_circumferences: circumferences,
        }
    }

    /// Total dimension `N = n + m`.
    pub fn total_dim(&self) -> usize {
        self.n + self.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Domain("end dimension n must be at least 1".into()));
        }
        if self.torus_circumferences.len() != self.m {
            return Err(Error::Domain(format!(
                "torus dimension {} but {} circumferences",
                self.m,
                self.torus_circumferences.len()
            )));
        }
        if self.torus_circumferences.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Domain("torus circumferences must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPoint {
    pub euclid_sep: f64,
    pub torus_seps: Vec<f64>,
}

impl KernelPoint {
    pub fn euclidean(sep: f64) -> Self {
        Self {
            euclid_sep: sep,
            torus_seps: Vec::new(),
        }
    }

    pub fn geodesic_dist(&self) -> f64 {
        (self.euclid_sep * self.euclid_sep + self.torus_seps.iter().map(|t| t * t).sum::<f64>())
            .sqrt()
    }

    fn check(&self, geom: &EndGeometry) -> Result<()> {
        if !(self.euclid_sep >= 0.0) {
            return Err(Error::Domain("euclidean separation must be nonnegative".into()));
        }
        if self.torus_seps.len() != geom.m {
            return Err(Error::Domain(format!(
                "point has {} torus separations, geometry has {}",
                self.torus_seps.len(),
                geom.m
            )));
        }
        for (t, l) in self.torus_seps.iter().zip(&geom.torus_circumferences) {
            if !(*t >= 0.0 && *t <= 0.5 * l) {
                return Err(Error::Domain(format!(
                    "torus separation {t} outside [0, {}]",
                    0.5 * l
                )));
            }
        }
        Ok(())
    }
}

fn kernel_rule() -> LineRule {
    LineRule {
        initial_points: 48,
        tol: 1e-13,
        max_doublings: 10,
    }
}

/// Log of the free `ℝ^N` kernel of `(Δ + k²)^{-j}` at distance `r`.
///
/// With `grad` set, returns the log of `|∂_r|` of the kernel instead.
fn free_log_kernel(dim: usize, j: u32, k: f64, r: f64, grad: bool) -> Result<f64> {
    let nh = 0.5 * dim as f64;
    let jf = j as f64;
    if r == 0.0 && (grad || 2 * j as usize <= dim) {
        return Err(Error::Domain(format!(
            "kernel of order {j} in dimension {dim} is singular on the diagonal"
        )));
    }
    let t_star = if r > 0.0 { r / (2.0 * k) } else { 1.0 / (k * k) };
    let ln_ts = t_star.ln();
    let norm = ln_gamma(jf);
    let ln_half_r = if r > 0.0 { (0.5 * r).ln() } else { 0.0 };
    let phi = |u: f64| {
        let ln_t = ln_ts + u;
        let t = ln_t.exp();
        // t^{j-1} dt = t^j du
        let mut v = jf * ln_t - t * k * k - nh * (4.0 * PI * t).ln() - r * r / (4.0 * t) - norm;
        if grad {
            v += ln_half_r - ln_t;
        }
        v
    };
    log_line_integral(phi, 0.0, kernel_rule())
}

/// Free `ℝ^N` resolvent kernel, exposed for oracle comparisons.
pub fn free_resolvent(dim: usize, j: u32, k: f64, r: f64) -> Result<f64> {
    Ok(free_log_kernel(dim, j, k, r, false)?.exp())
}

fn check_args(geom: &EndGeometry, j: u32, k: f64, pt: &KernelPoint) -> Result<()> {
    geom.validate()?;
    pt.check(geom)?;
    if j < 1 {
        return Err(Error::Domain("resolvent order j must be at least 1".into()));
    }
    if !(k > 0.0) {
        return Err(Error::Domain(format!("k must be positive, got {k}")));
    }
    if pt.geodesic_dist() == 0.0 && 2 * j as usize <= geom.total_dim() {
        return Err(Error::Domain(
            "on-diagonal evaluation with 2j <= N is singular".into(),
        ));
    }
    Ok(())
}

/// Calls `visit` for every lattice vector with sup-norm exactly `s`.
fn for_each_in_shell(m: usize, s: i64, visit: &mut dyn FnMut(&[i64])) {
    let mut nu = vec![-s; m];
    loop {
        if nu.iter().any(|v| v.abs() == s) {
            visit(&nu);
        }
        let mut i = 0;
        loop {
            if i == m {
                return;
            }
            nu[i] += 1;
            if nu[i] <= s {
                break;
            }
            nu[i] = -s;
            i += 1;
        }
    }
}

fn image_sum(geom: &EndGeometry, pt: &KernelPoint, term: &dyn Fn(f64, f64) -> Result<f64>) -> Result<f64> {
    let e2 = pt.euclid_sep * pt.euclid_sep;
    let dist = |nu: &[i64]| -> f64 {
        let mut d2 = e2;
        for ((s, c), &v) in pt.torus_seps.iter().zip(&geom.torus_circumferences).zip(nu) {
            let t = s + c * v as f64;
            d2 += t * t;
        }
        d2.sqrt()
    };
    let zero = vec![0i64; geom.m];
    let mut total = term(dist(&zero), pt.euclid_sep)?;
    if geom.m == 0 {
        return Ok(total);
    }
    for s in 1..=MAX_SHELLS as i64 {
        let mut shell = 0.0;
        let mut err = None;
        for_each_in_shell(geom.m, s, &mut |nu| {
            if err.is_some() {
                return;
            }
            match term(dist(nu), pt.euclid_sep) {
                Ok(v) => shell += v,
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += shell;
        if shell.abs() < SHELL_REL_TOL * total.abs() {
            return Ok(total);
        }
    }
    Err(Error::Truncation {
        shells: MAX_SHELLS,
    })
}

/// `Σ_ν cos(2π ν·θ/L) term(k_ν) / vol(T)` over torus modes, `k_ν² = k² + |2πν/L|²`.
///
/// Shells stop on the size of their terms, not of their signed sum, so a
/// vanishing cosine cannot end the loop early.
fn mode_sum(geom: &EndGeometry, pt: &KernelPoint, k: f64, term: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let vol: f64 = geom.torus_circumferences.iter().product();
    let phase_and_mass = |nu: &[i64]| -> (f64, f64) {
        let mut phase = 0.0;
        let mut k2 = k * k;
        for ((s, c), &v) in pt.torus_seps.iter().zip(&geom.torus_circumferences).zip(nu) {
            let w = 2.0 * PI * v as f64 / c;
            phase += w * s;
            k2 += w * w;
        }
        (phase.cos(), k2.sqrt())
    };
    let mut total = term(k)?;
    let mut scale = total.abs();
    for s in 1..=MAX_MODE_SHELLS as i64 {
        let mut shell = 0.0;
        let mut size = 0.0;
        let mut err = None;
        for_each_in_shell(geom.m, s, &mut |nu| {
            if err.is_some() {
                return;
            }
            let (c, km) = phase_and_mass(nu);
            match term(km) {
                Ok(v) => {
                    shell += c * v;
                    size += v.abs();
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += shell;
        scale = scale.max(total.abs());
        if size < SHELL_REL_TOL * scale {
            return Ok(total / vol);
        }
    }
    Err(Error::Truncation {
        shells: MAX_MODE_SHELLS,
    })
}

/// Runs whichever lattice sum decays faster per shell, then the other one if
/// the first runs out of shells.
fn lattice_sum(
    geom: &EndGeometry,
    pt: &KernelPoint,
    k: f64,
    images: &dyn Fn() -> Result<f64>,
    modes: &dyn Fn() -> Result<f64>,
) -> Result<f64> {
    if geom.m == 0 || pt.euclid_sep == 0.0 {
        return images();
    }
    let l_min = geom.torus_circumferences.iter().cloned().fold(f64::INFINITY, f64::min);
    let l_max = geom.torus_circumferences.iter().cloned().fold(0.0, f64::max);
    let image_rate = k * l_min;
    let mode_rate = 2.0 * PI * pt.euclid_sep / l_max;
    let (first, second) = if image_rate >= mode_rate {
        (images, modes)
    } else {
        (modes, images)
    };
    match first() {
        Err(Error::Truncation { .. }) => second(),
        other => other,
    }
}

/// Kernel of `(Δ_{ℝ^n×T^m} + k²)^{-j}` at separation `pt`.
pub fn end_resolvent(geom: &EndGeometry, j: u32, k: f64, pt: &KernelPoint) -> Result<f64> {
    check_args(geom, j, k, pt)?;
    let dim = geom.total_dim();
    lattice_sum(
        geom,
        pt,
        k,
        &|| image_sum(geom, pt, &|r, _| free_resolvent(dim, j, k, r)),
        &|| mode_sum(geom, pt, k, &|km| free_resolvent(geom.n, j, km, pt.euclid_sep)),
    )
}

/// Magnitude of the derivative of the kernel in the euclidean separation.
pub fn end_resolvent_grad(geom: &EndGeometry, j: u32, k: f64, pt: &KernelPoint) -> Result<f64> {
    check_args(geom, j, k, pt)?;
    if pt.geodesic_dist() == 0.0 {
        return Err(Error::Domain("gradient is singular on the diagonal".into()));
    }
    if pt.euclid_sep == 0.0 {
        return Ok(0.0);
    }
    let dim = geom.total_dim();
    lattice_sum(
        geom,
        pt,
        k,
        &|| image_sum(geom, pt, &|r, e| Ok(free_log_kernel(dim, j, k, r, true)?.exp() * e / r)),
        &|| {
            let e = pt.euclid_sep;
            mode_sum(geom, pt, k, &|km| Ok(free_log_kernel(geom.n, j, km, e, true)?.exp())).map(f64::abs)
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundId {
    BesselUpper,
    BesselLower,
    BesselGrad,
    /// Resolvent, `2j ∉ {n, N}`.
    Resolvent,
    /// Resolvent, logarithmic cases `2j ∈ {n, N}`.
    ResolventLog,
    /// Gradient, `2j - 1 ∉ {n, N}`.
    Grad,
    /// Gradient, logarithmic cases `2j - 1 ∈ {n, N}`.
    GradLog,
    ProductKernel,
    ProductGrad,
    ResolventLower,
}

impl BoundId {
    pub const ALL: [BoundId; 10] = [
        BoundId::BesselUpper,
        BoundId::BesselLower,
        BoundId::BesselGrad,
        BoundId::Resolvent,
        BoundId::ResolventLog,
        BoundId::Grad,
        BoundId::GradLog,
        BoundId::ProductKernel,
        BoundId::ProductGrad,
        BoundId::ResolventLower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundId::BesselUpper => "bessel-upper",
            BoundId::BesselLower => "bessel-lower",
            BoundId::BesselGrad => "bessel-grad",
            BoundId::Resolvent => "resolvent",
            BoundId::ResolventLog => "resolvent-log",
            BoundId::Grad => "grad",
            BoundId::GradLog => "grad-log",
            BoundId::ProductKernel => "product-kernel",
            BoundId::ProductGrad => "product-grad",
            BoundId::ResolventLower => "resolvent-lower",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BoundId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown bound id {s:?}")))
    }

    fn is_lower(self) -> bool {
        matches!(self, BoundId::BesselLower | BoundId::ResolventLower)
    }

    fn is_grad(self) -> bool {
        matches!(
            self,
            BoundId::BesselGrad | BoundId::Grad | BoundId::GradLog | BoundId::ProductGrad
        )
    }

    fn low_energy(self) -> bool {
        !matches!(
            self,
            BoundId::BesselUpper | BoundId::BesselLower | BoundId::BesselGrad
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstPoint {
    pub pt: KernelPoint,
    pub k: f64,
    /// How far the ratio lands outside the fitted constant; ≤ 1 + slack on a pass.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_id: BoundId,
    pub fitted_constant: f64,
    pub fitted_rate: f64,
    pub pass: bool,
    pub worst_point: WorstPoint,
}

/// Relative slack allowed on points held out of the constant fit.
pub const HOLDOUT_SLACK: f64 = 0.05;

fn ln_max1_log(x: f64) -> f64 {
    (1.0f64).max((1.0 / x).ln())
}

fn ln_sum(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log of the envelope at `(k, d)` for rate `c`, including the rate factor.
struct Envelope {
    id: BoundId,
    n: f64,
    big_n: f64,
    j: f64,
    split: bool,
}

impl Envelope {
    fn new(geom: &EndGeometry, j: u32, id: BoundId) -> Result<Self> {
        let n = geom.n as f64;
        let big_n = geom.total_dim() as f64;
        let jf = j as f64;
        let two_j = 2 * j as usize;
        let eq = |q: usize| q == geom.n || q == geom.total_dim();
        match id {
            BoundId::Resolvent if eq(two_j) => {
                return Err(Error::Domain(format!(
                    "resolvent needs 2j ∉ {{n, N}}; use resolvent-log for j = {j}"
                )))
            }
            BoundId::ResolventLog if !eq(two_j) => {
                return Err(Error::Domain(format!(
                    "resolvent-log covers 2j ∈ {{n, N}} only; use resolvent for j = {j}"
                )))
            }
            BoundId::Grad if eq(two_j - 1) => {
                return Err(Error::Domain(format!(
                    "grad needs 2j-1 ∉ {{n, N}}; use grad-log for j = {j}"
                )))
            }
            BoundId::GradLog if !eq(two_j - 1) => {
                return Err(Error::Domain(format!(
                    "grad-log covers 2j-1 ∈ {{n, N}} only; use grad for j = {j}"
                )))
            }
            BoundId::ResolventLower if two_j >= geom.n => {
                return Err(Error::Domain(format!(
                    "resolvent-lower bound needs j < n/2, got j = {j}, n = {}",
                    geom.n
                )))
            }
            _ => {}
        }
        Ok(Self {
            id,
            n,
            big_n,
            j: jf,
            split: geom.m > 0,
        })
    }

    /// Two-term sums collapse to one term when `N = n`.
    fn pair(&self, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let a = f(self.big_n)?;
        if self.split {
            Ok(ln_sum(a, f(self.n)?))
        } else {
            Ok(a)
        }
    }

    fn ln_eval(&self, k: f64, d: f64, c: f64) -> Result<f64> {
        let j = self.j;
        let kd = k * d;
        let generic = |q: f64| -> f64 {
            // d^{min(q - D, 0)} k^{-max(q - D, 0)} paired over D ∈ {N, n}
            let t = |dim: f64| {
                let e = q - dim;
                e.min(0.0) * d.ln() - e.max(0.0) * k.ln()
            };
            if self.split {
                ln_sum(t(self.big_n), t(self.n))
            } else {
                t(self.big_n)
            }
        };
        let log_case = |q: f64| -> f64 {
            let l = ln_max1_log(kd).ln();
            let (nn, bn) = (self.n, self.big_n);
            if q == nn && q == bn {
                l
            } else if q == nn {
                ln_sum((q - bn) * d.ln(), l)
            } else {
                ln_sum(l, (nn - q) * k.ln())
            }
        };
        let bessel = |a: f64, shift: f64| -> Result<f64> {
            self.pair(|dim| {
                let spec = BesselSpec::new(a, dim);
                Ok((dim + shift - 2.0 * j) * k.ln() + bessel_log_eval(&spec, c * kd)?)
            })
        };
        let v = match self.id {
            BoundId::BesselUpper | BoundId::BesselLower => return bessel(2.0 * j, 0.0),
            BoundId::BesselGrad => return bessel(2.0 * j - 1.0, 1.0),
            BoundId::Resolvent => generic(2.0 * j),
            BoundId::ResolventLog => log_case(2.0 * j),
            BoundId::Grad => generic(2.0 * j - 1.0),
            BoundId::GradLog => log_case(2.0 * j - 1.0),
            BoundId::ProductKernel => {
                -2.0 * (j - 1.0) * k.ln() + self.pair(|dim| Ok((2.0 - dim) * d.ln()))?
            }
            BoundId::ProductGrad => {
                -2.0 * (j - 1.0) * k.ln() + self.pair(|dim| Ok((1.0 - dim) * d.ln()))?
            }
            BoundId::ResolventLower => self.pair(|dim| Ok((2.0 * j - dim) * d.ln()))?,
        };
        Ok(v - c * kd)
    }
}

struct Sample {
    k: f64,
    pt_index: usize,
    d: f64,
    ln_kernel: f64,
}

/// Golden-section minimisation of `f` on `[lo, hi]`.
fn golden_min(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, iters: usize) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fits constant and rate for `bound_id` over `k_grid × pt_grid`.
///
/// The rate flattens the log-ratio kernel/envelope against `kd` on the
/// exponential part of the grid (`kd ≥ 1`, or all points if that part is too
/// small). The constant is the extreme ratio over the even-indexed points of
/// `pt_grid` (plus the last one); the remaining points are held out and must
/// satisfy the bound within [`HOLDOUT_SLACK`].
pub fn check_bounds(
    geom: &EndGeometry,
    j: u32,
    bound_id: BoundId,
    k_grid: &[f64],
    pt_grid: &[KernelPoint],
) -> Result<BoundReport> {
    geom.validate()?;
    if k_grid.is_empty() || pt_grid.is_empty() {
        return Err(Error::Domain("k and point grids must be nonempty".into()));
    }
    if bound_id.low_energy() && k_grid.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
        return Err(Error::Domain(format!(
            "{} is a low-energy bound; k grid must lie in (0, 1]",
            bound_id.name()
        )));
    }
    let env = Envelope::new(geom, j, bound_id)?;
    let pairs: Vec<(f64, usize)> = k_grid
        .iter()
        .flat_map(|&k| (0..pt_grid.len()).map(move |i| (k, i)))
        .collect();
    let samples: Vec<Sample> = pairs
        .par_iter()
        .map(|&(k, i)| {
            let pt = &pt_grid[i];
            let v = if bound_id.is_grad() {
                end_resolvent_grad(geom, j, k, pt)?
            } else {
                end_resolvent(geom, j, k, pt)?
            };
            if !(v > 0.0) {
                return Err(Error::Domain(format!(
                    "nonpositive kernel value {v} at k = {k}, d = {}",
                    pt.geodesic_dist()
                )));
            }
            Ok(Sample {
                k,
                pt_index: i,
                d: pt.geodesic_dist(),
                ln_kernel: v.ln(),
            })
        })
        .collect::<Result<_>>()?;

    let mut tail: Vec<&Sample> = samples.iter().filter(|s| s.k * s.d >= 1.0).collect();
    if tail.len() < 3 {
        tail = samples.iter().collect();
    }
    let slope_at = |c: f64| -> Result<f64> {
        let x: Vec<f64> = tail.iter().map(|s| s.k * s.d).collect();
        let y: Vec<f64> = tail
            .iter()
            .map(|s| Ok(s.ln_kernel - env.ln_eval(s.k, s.d, c)?))
            .collect::<Result<_>>()?;
        Ok(fit_line(&x, &y).map(|f| f.slope.abs()).unwrap_or(0.0))
    };
    let rate = golden_min(&slope_at, 0.02, 4.0, 60)?;

    let last = pt_grid.len() - 1;
    let in_fit = |i: usize| i.is_multiple_of(2) || i == last;
    let ln_ratio: Vec<f64> = samples
        .iter()
        .map(|s| Ok(s.ln_kernel - env.ln_eval(s.k, s.d, rate)?))
        .collect::<Result<_>>()?;
    let lower = bound_id.is_lower();
    let pick = |a: f64, b: f64| if lower { a.min(b) } else { a.max(b) };
    let init = if lower { f64::INFINITY } else { f64::NEG_INFINITY };
    let ln_c = samples
        .iter()
        .zip(&ln_ratio)
        .filter(|(s, _)| in_fit(s.pt_index))
        .fold(init, |acc, (_, &r)| pick(acc, r));
    let fitted_constant = ln_c.exp();

    let mut worst = (0usize, f64::NEG_INFINITY);
    for (i, &r) in ln_ratio.iter().enumerate() {
        let excess = if lower { ln_c - r } else { r - ln_c };
        if excess > worst.1 {
            worst = (i, excess);
        }
    }
    let excess = worst.1.exp();
    let pass = fitted_constant.is_finite()
        && fitted_constant > 0.0
        && rate > 0.0
        && excess <= 1.0 + HOLDOUT_SLACK;
    let ws = &samples[worst.0];
    Ok(BoundReport {
        bound_id,
        fitted_constant,
        fitted_rate: rate,
        pass,
        worst_point: WorstPoint {
            pt: pt_grid[ws.pt_index].clone(),
            k: ws.k,
            excess,
        },
    })
}

/// Default `k` grid: `(0, 1]` for low-energy bounds, `[0.01, 10]` otherwise.
pub fn default_k_grid(bound_id: BoundId) -> Vec<f64> {
    if bound_id.low_energy() {
        crate::bessel::log_grid(1e-3, 1.0, 6)
    } else {
        crate::bessel::log_grid(1e-2, 10.0, 6)
    }
}

/// Separations `0.1..20` in the flat factor, plus points offset by half a
/// circumference in every torus direction.
pub fn default_point_grid(geom: &EndGeometry) -> Vec<KernelPoint> {
    let seps = crate::bessel::log_grid(0.1, 20.0, 8);
    let mut pts: Vec<KernelPoint> = seps
        .iter()
        .map(|&s| KernelPoint {
            euclid_sep: s,
            torus_seps: vec![0.0; geom.torus_circumferences.len()],
        })
        .collect();
    if !geom.torus_circumferences.is_empty() {
        let half: Vec<f64> = geom.torus_circumferences.iter().map(|c| 0.5 * c).collect();
        pts.extend(seps.iter().step_by(2).map(|&s| KernelPoint {
            euclid_sep: s,
            torus_seps: half.clone(),
        }));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_enumeration_counts() {
        let mut count = 0;
        for_each_in_shell(2, 2, &mut |_| count += 1);
        assert_eq!(count, 25 - 9);
        count = 0;
        for_each_in_shell(1, 3, &mut |_| count += 1);
        assert_eq!(count, 2);
    }

    #[test]
    fn closed_form_examples() {
        let e1 = EndGeometry::euclidean(1);
        let v = end_resolvent(&e1, 1, 0.5, &KernelPoint::euclidean(2.0)).unwrap();
        assert!((v / (-1.0f64).exp() - 1.0).abs() < 1e-10);
        let v = end_resolvent(&e1, 2, 1.0, &KernelPoint::euclidean(1.0)).unwrap();
        assert!((v / ((-1.0f64).exp() / 2.0) - 1.0).abs() < 1e-10);
        let g = end_resolvent_grad(&e1, 1, 1.0, &KernelPoint::euclidean(2.0)).unwrap();
        assert!((g / ((-2.0f64).exp() / 2.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn diagonal_is_rejected_when_singular() {
        let e3 = EndGeometry::euclidean(3);
        assert!(end_resolvent(&e3, 1, 1.0, &KernelPoint::euclidean(0.0)).is_err());
        let e1 = EndGeometry::euclidean(1);
        let v = end_resolvent(&e1, 1, 2.0, &KernelPoint::euclidean(0.0)).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bound_id_roundtrip() {
        for b in BoundId::ALL {
            assert_eq!(BoundId::parse(b.name()).unwrap(), b);
            let js = serde_json::to_string(&b).unwrap();
            assert_eq!(js, format!("\"{}\"", b.name()));
        }
    }
}
