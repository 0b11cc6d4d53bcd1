//! Vertical and horizontal square functions on the radial model.
//!
//! `S f(x)² = ∫₀^∞ |∇(k²+Δ)^{-M} f(x)|² k^{4M-3} dk` and
//! `s f(x)² = ∫₀^∞ |Δ(k²+Δ)^{-M} f(x)|² k^{4M-5} dk` are discretised with a
//! log-uniform trapezoid rule in `k`, split at `k = 1`, plus the exact tail
//! above the top node obtained from the `k^{-4M}` decay of the resolvent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::radial_model::{ModelManifold, RadialFunction};
use crate::solver::{shifted_apply, SolveReport, StarFactor};
use crate::{Error, Result};

pub const DEFAULT_POINTS_PER_DECADE_K: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Range {
    Low,
    High,
    Full,
}

impl Range {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Range::Low),
            "high" => Ok(Range::High),
            "full" => Ok(Range::Full),
            _ => Err(Error::Config(format!("unknown range {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Vertical,
    Horizontal,
}

impl Kind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vertical" => Ok(Kind::Vertical),
            "horizontal" => Ok(Kind::Horizontal),
            _ => Err(Error::Config(format!("unknown square function kind {s:?}"))),
        }
    }
}

/// Log-uniform k-nodes with separate trapezoid weights below and above `k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub k_lo: f64,
    pub k_split: f64,
    pub k_hi: f64,
    pub points_per_decade_k: usize,
    pub nodes: Vec<f64>,
    pub w_low: Vec<f64>,
    pub w_high: Vec<f64>,
}

fn log_segment(a: f64, b: f64, per_decade: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (((b / a).log10() * per_decade as f64).ceil() as usize).max(1);
    let step = (b / a).ln() / n as f64;
    let nodes: Vec<f64> = (0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a * (i as f64 * step).exp()
            }
        })
        .collect();
    let w = nodes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let end = if i == 0 || i == n { 0.5 } else { 1.0 };
            end * k * step
        })
        .collect();
    (nodes, w)
}

impl SpectralGrid {
    pub fn new(k_lo: f64, k_hi: f64, points_per_decade_k: usize) -> Result<Self> {
        let k_split = 1.0;
        if !(k_lo > 0.0 && k_lo < k_split && k_split <= k_hi) || points_per_decade_k == 0 {
            return Err(Error::Domain(format!(
                "spectral grid needs 0 < k_lo < 1 <= k_hi (k_lo = {k_lo}, k_hi = {k_hi})"
            )));
        }
        let (lo_nodes, lo_w) = log_segment(k_lo, k_split, points_per_decade_k);
        let mut nodes = lo_nodes;
        let mut w_low = lo_w;
        let mut w_high = vec![0.0; nodes.len()];
        if k_hi > k_split {
            let (hi_nodes, hi_w) = log_segment(k_split, k_hi, points_per_decade_k);
            w_high[nodes.len() - 1] = hi_w[0];
            for (k, w) in hi_nodes.into_iter().zip(hi_w).skip(1) {
                nodes.push(k);
                w_low.push(0.0);
                w_high.push(w);
            }
        }
        Ok(Self {
            k_lo,
            k_split,
            k_hi,
            points_per_decade_k,
            nodes,
            w_low,
            w_high,
        })
    }

    /// Default grid for a model: `k_lo = 10/r_max`, `k_hi = 1/h_min`.
    pub fn for_model(model: &ModelManifold, points_per_decade_k: usize) -> Result<Self> {
        Self::new(10.0 / model.r_max(), (1.0 / model.h_min()).max(1.0), points_per_decade_k)
    }

    pub fn weights(&self, range: Range) -> Vec<f64> {
        match range {
            Range::Low => self.w_low.clone(),
            Range::High => self.w_high.clone(),
            Range::Full => self.w_low.iter().zip(&self.w_high).map(|(a, b)| a + b).collect(),
        }
    }

    /// Indices carrying weight in `range`.
    fn active(&self, range: Range) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| match range {
                Range::Low => self.w_low[i] > 0.0,
                Range::High => self.w_high[i] > 0.0,
                Range::Full => true,
            })
            .collect()
    }

    /// `∫_{k_hi}^∞ k^{-3} dk`, the vertical tail factor.
    pub fn vertical_tail(&self) -> f64 {
        0.5 / (self.k_hi * self.k_hi)
    }

    /// `∫_{k_hi}^∞ k^{-5} dk`, the horizontal tail factor.
    pub fn horizontal_tail(&self) -> f64 {
        0.25 / self.k_hi.powi(4)
    }

    /// Grid quadrature of `g` over `range`, without any tail.
    pub fn integrate(&self, range: Range, g: impl Fn(f64) -> f64) -> f64 {
        let w = self.weights(range);
        self.nodes.iter().zip(&w).map(|(&k, &w)| w * g(k)).sum()
    }
}

/// Edge-valued function, one entry per model edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFunction {
    pub values: Vec<f64>,
}

/// Forward differences `(g_outer − g_inner)/h_e` with the ghost at 0.
pub fn grad_apply(model: &ModelManifold, g: &[f64]) -> EdgeFunction {
    EdgeFunction {
        values: model
            .edges
            .iter()
            .map(|e| (e.outer.map_or(0.0, |o| g[o]) - g[e.inner]) / e.h)
            .collect(),
    }
}

/// Spreads an edge density to nodes so that `Σ_v μ_v out_v = Σ_e m_e x_e`.
///
/// Interior edges split their measure evenly between both ends; the boundary
/// edge gives its whole measure to its interior node.
pub fn edge_to_node(model: &ModelManifold, edge_values: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; model.node_count()];
    for (e, &x) in model.edges.iter().zip(edge_values) {
        let mass = e.measure() * x;
        match e.outer {
            Some(o) => {
                acc[e.inner] += 0.5 * mass;
                acc[o] += 0.5 * mass;
            }
            None => acc[e.inner] += mass,
        }
    }
    for (a, m) in acc.iter_mut().zip(&model.measure) {
        *a /= m;
    }
    acc
}

/// Discrete `L^p(μ)` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(model: &ModelManifold, g: &[f64], p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm needs p >= 1");
    if p.is_infinite() {
        return g.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    g.iter()
        .zip(&model.measure)
        .map(|(v, m)| m * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Squared square function, kept on edges (vertical) or nodes (horizontal).
#[derive(Debug, Clone, PartialEq)]
pub struct SquareField {
    pub kind: Kind,
    /// Edge values for vertical, node values for horizontal.
    pub density: Vec<f64>,
    /// Pointwise node values of the square function.
    pub node_values: Vec<f64>,
}

impl SquareField {
    /// `‖·‖₂²` computed on the native (edge or node) form.
    pub fn l2_squared(&self, model: &ModelManifold) -> f64 {
        match self.kind {
            Kind::Vertical => model
                .edges
                .iter()
                .zip(&self.density)
                .map(|(e, x)| e.measure() * x)
                .sum(),
            Kind::Horizontal => model.measure.iter().zip(&self.density).map(|(m, x)| m * x).sum(),
        }
    }

    pub fn into_function(self, label: impl Into<String>) -> RadialFunction {
        RadialFunction::new(self.node_values, label)
    }
}

fn check_order(kind: Kind, order: u32) -> Result<()> {
    if order < 1 {
        return Err(Error::Domain("M must be at least 1".into()));
    }
    if kind == Kind::Horizontal && order < 2 {
        return Err(Error::Domain(
            "horizontal square function needs M >= 2".into(),
        ));
    }
    Ok(())
}

/// Factorizations for every node of a spectral grid, built once and shared.
pub struct SqfnEngine<'a> {
    pub model: &'a ModelManifold,
    pub grid: SpectralGrid,
    factors: Vec<StarFactor>,
}

impl<'a> SqfnEngine<'a> {
    pub fn new(model: &'a ModelManifold, grid: SpectralGrid) -> Result<Self> {
        let factors = grid
            .nodes
            .par_iter()
            .map(|&k| StarFactor::new(model, k))
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            grid,
            factors,
        })
    }

    /// Sums `term(k, factor)` over the active nodes of `range` in grid order.
    fn accumulate<F>(&self, range: Range, len: usize, term: F) -> Vec<f64>
    where
        F: Fn(usize) -> Vec<f64> + Sync,
    {
        let idx = self.grid.active(range);
        let parts: Vec<Vec<f64>> = idx.par_iter().map(|&i| term(i)).collect();
        let mut acc = vec![0.0; len];
        for part in &parts {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
        acc
    }

    fn range_sum<F>(&self, range: Range, len: usize, weight: &[f64], f: &F) -> Vec<f64>
    where
        F: Fn(&StarFactor) -> Vec<f64> + Sync,
    {
        self.accumulate(range, len, |i| {
            let w = weight[i];
            f(&self.factors[i]).into_iter().map(|v| w * v).collect()
        })
    }

    /// Low and high ranges are summed separately so that `S_<² + S_>² = S²`
    /// holds up to a single rounding.
    fn spectral_sum<F>(&self, range: Range, len: usize, f: F) -> Vec<f64>
    where
        F: Fn(&StarFactor) -> Vec<f64> + Sync,
    {
        match range {
            Range::Low => self.range_sum(Range::Low, len, &self.grid.w_low, &f),
            Range::High => self.range_sum(Range::High, len, &self.grid.w_high, &f),
            Range::Full => {
                let lo = self.range_sum(Range::Low, len, &self.grid.w_low, &f);
                let hi = self.range_sum(Range::High, len, &self.grid.w_high, &f);
                lo.into_iter().zip(hi).map(|(a, b)| a + b).collect()
            }
        }
    }

    pub fn field(&self, kind: Kind, order: u32, f: &[f64], range: Range) -> Result<SquareField> {
        check_order(kind, order)?;
        let model = self.model;
        let m = order as i32;
        match kind {
            Kind::Vertical => {
                let mut density = self.spectral_sum(range, model.edges.len(), |fac| {
                    let u = fac.resolvent_power(model, order, f);
                    let kp = fac.k.powi(4 * m - 3);
                    grad_apply(model, &u).values.into_iter().map(|g| kp * g * g).collect()
                });
                if range != Range::Low {
                    let t = self.grid.vertical_tail();
                    for (d, g) in density.iter_mut().zip(grad_apply(model, f).values) {
                        *d += t * g * g;
                    }
                }
                let node_values = edge_to_node(model, &density).into_iter().map(f64::sqrt).collect();
                Ok(SquareField {
                    kind,
                    density,
                    node_values,
                })
            }
            Kind::Horizontal => {
                let mut density = self.spectral_sum(range, model.node_count(), |fac| {
                    let u = fac.resolvent_power(model, order, f);
                    let kp = fac.k.powi(4 * m - 5);
                    model.laplacian_apply(&u).into_iter().map(|g| kp * g * g).collect()
                });
                if range != Range::Low {
                    let t = self.grid.horizontal_tail();
                    for (d, g) in density.iter_mut().zip(model.laplacian_apply(f)) {
                        *d += t * g * g;
                    }
                }
                let node_values = density.iter().map(|v| v.sqrt()).collect();
                Ok(SquareField {
                    kind,
                    density,
                    node_values,
                })
            }
        }
    }

    pub fn vertical_sqfn(&self, order: u32, f: &RadialFunction, range: Range) -> Result<RadialFunction> {
        Ok(self
            .field(Kind::Vertical, order, &f.values, range)?
            .into_function(format!("S[M={order}, {range:?}]({})", f.label)))
    }

    pub fn horizontal_sqfn(&self, order: u32, f: &RadialFunction, range: Range) -> Result<RadialFunction> {
        Ok(self
            .field(Kind::Horizontal, order, &f.values, range)?
            .into_function(format!("s[M={order}, {range:?}]({})", f.label)))
    }

    /// `‖reconstruction − f‖₂ / ‖f‖₂` for the resolution of the identity.
    pub fn resolution_identity_residual(&self, order: u32, f: &[f64], kind: Kind) -> Result<f64> {
        check_order(kind, order)?;
        let model = self.model;
        let m = order as i32;
        let rec: Vec<f64> = match kind {
            Kind::Vertical => {
                let mut s = self.spectral_sum(Range::Full, model.node_count(), |fac| {
                    // R^M Δ R^M f: differencing a k^{-4M}-sized vector loses too much at small k
                    let g = model.laplacian_apply(&fac.resolvent_power(model, order, f));
                    let u = fac.resolvent_power(model, order, &g);
                    let kp = fac.k.powi(4 * m - 3);
                    u.into_iter().map(|v| kp * v).collect()
                });
                let t = self.grid.vertical_tail();
                for (a, b) in s.iter_mut().zip(model.laplacian_apply(f)) {
                    *a += t * b;
                }
                let c = 2.0 * (2.0 * order as f64 - 1.0);
                s.into_iter().map(|v| c * v).collect()
            }
            Kind::Horizontal => {
                let mut s = self.spectral_sum(Range::Full, model.node_count(), |fac| {
                    let g = model.laplacian_apply(&fac.resolvent_power(model, order, f));
                    let u = model.laplacian_apply(&fac.resolvent_power(model, order, &g));
                    let kp = fac.k.powi(4 * m - 5);
                    u.into_iter().map(|v| kp * v).collect()
                });
                let t = self.grid.horizontal_tail();
                let lf = model.laplacian_apply(f);
                for (a, b) in s.iter_mut().zip(model.laplacian_apply(&lf)) {
                    *a += t * b;
                }
                let mf = order as f64;
                let c = (2.0 * mf - 1.0) * (2.0 * mf - 2.0);
                // dt/t = 2 dk/k under t = 1/k²
                s.into_iter().map(|v| 2.0 * c * v).collect()
            }
        };
        let diff: Vec<f64> = rec.iter().zip(f).map(|(a, b)| a - b).collect();
        Ok(lp_norm(model, &diff, 2.0) / lp_norm(model, f, 2.0))
    }
}

/// `(Δ+k²)^{-M} f` with a residual report, for one-off use.
pub fn resolvent_apply(
    model: &ModelManifold,
    k: f64,
    order: u32,
    f: &RadialFunction,
) -> Result<(RadialFunction, SolveReport)> {
    let fac = StarFactor::new(model, k)?;
    resolvent_apply_with(model, &fac, order, f)
}

/// As [`resolvent_apply`] with an existing factorization.
pub fn resolvent_apply_with(
    model: &ModelManifold,
    fac: &StarFactor,
    order: u32,
    f: &RadialFunction,
) -> Result<(RadialFunction, SolveReport)> {
    if order < 1 {
        return Err(Error::Domain("M must be at least 1".into()));
    }
    let rel = |x: &[f64], y: &[f64]| {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let n = lp_norm(model, y, 2.0);
        let d = lp_norm(model, &diff, 2.0);
        if n > 0.0 {
            d / n
        } else {
            d
        }
    };
    let mut u = f.values.clone();
    let mut residual: f64 = 0.0;
    for _ in 0..order {
        let next = fac.resolvent(model, &u);
        residual = residual.max(rel(&shifted_apply(model, fac.k, &next), &u));
        u = next;
    }
    let mut back = u.clone();
    for _ in 0..order {
        back = shifted_apply(model, fac.k, &back);
    }
    let round_trip = rel(&back, &f.values);
    Ok((
        RadialFunction::new(u, format!("R[k={}, M={order}]({})", fac.k, f.label)),
        SolveReport {
            k: fac.k,
            order,
            residual,
            round_trip,
            factorization_reused: order > 1,
        },
    ))
}

/// One-shot vertical square function with the default grid.
pub fn vertical_sqfn(
    model: &ModelManifold,
    grid: &SpectralGrid,
    order: u32,
    f: &RadialFunction,
    range: Range,
) -> Result<RadialFunction> {
    SqfnEngine::new(model, grid.clone())?.vertical_sqfn(order, f, range)
}

/// One-shot horizontal square function.
pub fn horizontal_sqfn(
    model: &ModelManifold,
    grid: &SpectralGrid,
    order: u32,
    f: &RadialFunction,
    range: Range,
) -> Result<RadialFunction> {
    SqfnEngine::new(model, grid.clone())?.horizontal_sqfn(order, f, range)
}

/// Analytic `‖Sf‖₂²/‖f‖₂²` for the vertical square function.
pub fn vertical_l2_constant(order: u32) -> f64 {
    1.0 / (2.0 * (2.0 * order as f64 - 1.0))
}

/// Analytic `‖sf‖₂²/‖f‖₂²` for the horizontal square function.
pub fn horizontal_l2_constant(order: u32) -> f64 {
    let m = order as f64;
    1.0 / (2.0 * (2.0 * m - 1.0) * (2.0 * m - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_split_node() {
        let g = SpectralGrid::new(1e-3, 20.0, 16).unwrap();
        let i = g.nodes.iter().position(|&k| k == 1.0).unwrap();
        assert!(g.w_low[i] > 0.0 && g.w_high[i] > 0.0);
        assert!(g.w_low.iter().zip(&g.w_high).all(|(a, b)| *a >= 0.0 && *b >= 0.0));
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.nodes.last().unwrap(), 20.0);
    }

    #[test]
    fn grid_reproduces_kernel_integral() {
        let g = SpectralGrid::new(1e-6, 50.0, 32).unwrap();
        for m in [1, 2] {
            let mi = m as i32;
            let v = g.integrate(Range::Full, |k| k.powi(4 * mi - 3) / (1.0 + k * k).powi(2 * mi))
                + g.vertical_tail();
            let target = vertical_l2_constant(m);
            assert!((v / target - 1.0).abs() < 5e-3, "M = {m}: {v} vs {target}");
        }
    }

    #[test]
    fn l2_constants() {
        assert_eq!(vertical_l2_constant(1), 0.5);
        assert!((vertical_l2_constant(2) - 1.0 / 6.0).abs() < 1e-15);
        assert!((horizontal_l2_constant(2) - 1.0 / 12.0).abs() < 1e-15);
    }
}
