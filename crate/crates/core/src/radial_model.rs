//! Finite-volume radial model of a manifold with ends.
//!
//! Each end carries the density `r^{n-1}` on a geometric grid in `r`, with a
//! Dirichlet ghost node at `r_max`. All ends attach to a single hub node. Edge
//! conductances are `1 / ∫ r^{1-n} dr` over the edge, so `r^{2-n}` is exactly
//! discretely harmonic on each end and summation by parts holds exactly.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_NODES_PER_END: usize = 100;
pub const MAX_ENDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndProfile {
    pub n: usize,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    pub r_max: f64,
    pub points_per_decade: usize,
}

fn default_r_min() -> f64 {
    1.0
}

impl EndProfile {
    pub fn new(n: usize, r_max: f64, points_per_decade: usize) -> Self {
        Self {
            n,
            r_min: 1.0,
            r_max,
            points_per_decade,
        }
    }

    fn node_count(&self) -> usize {
        ((self.r_max / self.r_min).log10() * self.points_per_decade as f64).round() as usize
    }
}

/// Where a node sits in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Site {
    Hub,
    End { end: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub inner: usize,
    /// `None` for the Dirichlet ghost beyond `r_max`.
    pub outer: Option<usize>,
    pub cond: f64,
    pub h: f64,
    pub end: usize,
}

impl Edge {
    /// Edge measure chosen so that `Σ m_e |grad_e|² = Q(f)`.
    pub fn measure(&self) -> f64 {
        self.cond * self.h * self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndLayout {
    pub profile: EndProfile,
    /// Index of the first node of this end.
    pub offset: usize,
    /// Index of the hub edge; edge `first_edge + 1 + j` leaves node `j` outward.
    pub first_edge: usize,
    pub radii: Vec<f64>,
    /// Dual-cell boundaries; node `j` owns `[bounds[j], bounds[j+1]]`.
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifold {
    pub ends: Vec<EndLayout>,
    pub measure: Vec<f64>,
    pub sites: Vec<Site>,
    pub edges: Vec<Edge>,
    pub n_min: usize,
    /// Edges incident to each node, for the transposed stencils.
    incident: Vec<Vec<usize>>,
}

/// `∫_a^b r^{1-n} dr` for `n ≥ 3`.
fn inverse_density_integral(n: usize, a: f64, b: f64) -> f64 {
    let e = 2.0 - n as f64;
    (a.powf(e) - b.powf(e)) / (n as f64 - 2.0)
}

fn shell_volume(n: usize, a: f64, b: f64) -> f64 {
    let nf = n as f64;
    (b.powf(nf) - a.powf(nf)) / nf
}

pub fn build_model(ends: &[EndProfile]) -> Result<ModelManifold> {
    if ends.is_empty() || ends.len() > MAX_ENDS {
        return Err(Error::InvalidModel(format!(
            "need 1 to {MAX_ENDS} ends, got {}",
            ends.len()
        )));
    }
    for (i, e) in ends.iter().enumerate() {
        if e.n < 3 {
            return Err(Error::InvalidModel(format!(
                "end {i}: dimension {} below 3",
                e.n
            )));
        }
        if !(e.r_min > 0.0) || !(e.r_max >= 1e3 * e.r_min) {
            return Err(Error::InvalidModel(format!(
                "end {i}: need r_max >= 1e3 r_min > 0 (r_min = {}, r_max = {})",
                e.r_min, e.r_max
            )));
        }
        if e.node_count() < MIN_NODES_PER_END {
            return Err(Error::InvalidModel(format!(
                "end {i}: {} nodes, fewer than {MIN_NODES_PER_END}",
                e.node_count()
            )));
        }
    }

    let hub_measure: f64 = ends
        .iter()
        .map(|e| e.r_min.powf(e.n as f64) / e.n as f64)
        .sum();
    let mut measure = vec![hub_measure];
    let mut sites = vec![Site::Hub];
    let mut edges = Vec::new();
    let mut layouts = Vec::new();

    for (ei, e) in ends.iter().enumerate() {
        let count = e.node_count();
        let offset = measure.len();
        let span = e.r_max / e.r_min;
        // radii[count] is the ghost at r_max
        let radii: Vec<f64> = (0..=count)
            .map(|j| {
                if j == count {
                    e.r_max
                } else {
                    e.r_min * span.powf(j as f64 / count as f64)
                }
            })
            .collect();
        let mut bounds = Vec::with_capacity(count + 1);
        bounds.push(e.r_min);
        for j in 1..=count {
            bounds.push((radii[j - 1] * radii[j]).sqrt());
        }
        for j in 0..count {
            measure.push(shell_volume(e.n, bounds[j], bounds[j + 1]));
            sites.push(Site::End { end: ei, index: j });
        }
        let step = radii[1] / radii[0];
        let virtual_hub_radius = e.r_min / step;
        let first_edge = edges.len();
        edges.push(Edge {
            inner: 0,
            outer: Some(offset),
            cond: 1.0 / inverse_density_integral(e.n, virtual_hub_radius, radii[0]),
            h: radii[0] - virtual_hub_radius,
            end: ei,
        });
        for j in 0..count {
            edges.push(Edge {
                inner: offset + j,
                outer: if j + 1 < count { Some(offset + j + 1) } else { None },
                cond: 1.0 / inverse_density_integral(e.n, radii[j], radii[j + 1]),
                h: radii[j + 1] - radii[j],
                end: ei,
            });
        }
        layouts.push(EndLayout {
            profile: e.clone(),
            offset,
            first_edge,
            radii: radii[..count].to_vec(),
            bounds,
        });
    }

    let mut incident = vec![Vec::new(); measure.len()];
    for (i, e) in edges.iter().enumerate() {
        incident[e.inner].push(i);
        if let Some(o) = e.outer {
            incident[o].push(i);
        }
    }
    let n_min = ends.iter().map(|e| e.n).min().unwrap();
    Ok(ModelManifold {
        ends: layouts,
        measure,
        sites,
        edges,
        n_min,
        incident,
    })
}

impl ModelManifold {
    pub fn node_count(&self) -> usize {
        self.measure.len()
    }

    /// Radius of a node; the hub reports 0.
    pub fn radius(&self, v: usize) -> f64 {
        match self.sites[v] {
            Site::Hub => 0.0,
            Site::End { end, index } => self.ends[end].radii[index],
        }
    }

    pub fn h_min(&self) -> f64 {
        self.edges.iter().map(|e| e.h).fold(f64::INFINITY, f64::min)
    }

    /// Smallest outer radius over all ends.
    pub fn r_max(&self) -> f64 {
        self.ends
            .iter()
            .map(|e| e.profile.r_max)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// Index of an end attaining `n_min`.
    pub fn min_dimension_end(&self) -> usize {
        self.ends
            .iter()
            .position(|e| e.profile.n == self.n_min)
            .unwrap()
    }

    fn check_len(&self, f: &[f64]) {
        assert_eq!(f.len(), self.node_count(), "function length does not match model");
    }

    /// `(Δf)_v = μ_v^{-1} Σ_e cond_e (f_v − f_u)`, ghost values 0.
    pub fn laplacian_apply(&self, f: &[f64]) -> Vec<f64> {
        self.check_len(f);
        let mut out = vec![0.0; f.len()];
        for e in &self.edges {
            let fo = e.outer.map_or(0.0, |o| f[o]);
            let flux = e.cond * (f[e.inner] - fo);
            out[e.inner] += flux;
            if let Some(o) = e.outer {
                out[o] -= flux;
            }
        }
        for (v, o) in out.iter_mut().enumerate() {
            *o /= self.measure[v];
        }
        out
    }

    /// `Q(f) = Σ_e cond_e (f_inner − f_outer)²`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        self.check_len(f);
        self.edges
            .iter()
            .map(|e| {
                let d = f[e.inner] - e.outer.map_or(0.0, |o| f[o]);
                e.cond * d * d
            })
            .sum()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.check_len(f);
        self.check_len(g);
        f.iter()
            .zip(g)
            .zip(&self.measure)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// Volume of the part of end `end` below radius `r`.
    ///
    /// Cumulative dual-cell measure, linearly interpolated inside the cell
    /// containing `r`.
    pub fn ball_volume(&self, end: usize, r: f64) -> f64 {
        let lay = &self.ends[end];
        let b = &lay.bounds;
        if r <= b[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 0..lay.radii.len() {
            let mu = self.measure[lay.offset + j];
            if r >= b[j + 1] {
                acc += mu;
            } else {
                return acc + mu * (r - b[j]) / (b[j + 1] - b[j]);
            }
        }
        acc
    }

    fn check_end(&self, end: usize) -> Result<()> {
        if end >= self.ends.len() {
            return Err(Error::Domain(format!(
                "end index {end} out of range ({} ends)",
                self.ends.len()
            )));
        }
        Ok(())
    }

    /// Cubic smoothstep in `log r` from 0 at `ramp.0` to 1 at `ramp.1` on `end`.
    pub fn cutoff(&self, end: usize, ramp: (f64, f64)) -> Result<RadialFunction> {
        self.check_end(end)?;
        let p = &self.ends[end].profile;
        let (ra, rb) = ramp;
        if !(p.r_min <= ra && ra < rb && rb <= p.r_max / 100.0) {
            return Err(Error::Domain(format!(
                "ramp [{ra}, {rb}] must satisfy r_min <= r_a < r_b <= r_max/100"
            )));
        }
        let lay = &self.ends[end];
        let mut values = vec![0.0; self.node_count()];
        for (j, &r) in lay.radii.iter().enumerate() {
            values[lay.offset + j] = smoothstep((r / ra).ln() / (rb / ra).ln());
        }
        Ok(RadialFunction {
            values,
            label: format!("cutoff(end={end}, ramp=[{ra}, {rb}])"),
        })
    }

    /// `r^{-(n/p)(1+ε)}` times the cutoff on `end`.
    pub fn witness_function(
        &self,
        end: usize,
        p: f64,
        eps: f64,
        ramp: (f64, f64),
    ) -> Result<RadialFunction> {
        self.check_end(end)?;
        if !(p > 1.0 && p <= 20.0) {
            return Err(Error::Domain(format!("witness needs p in (1, 20], got {p}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain(format!("witness needs eps in (0, 1], got {eps}")));
        }
        if !self.witness_truncation_ok(end, eps) {
            log::warn!(
                "n·eps·ln(r_max) = {:.2} < 3 on end {end}: truncation pollutes the eps-asymptotics",
                self.truncation_margin(end, eps)
            );
        }
        let cut = self.cutoff(end, ramp)?;
        let n = self.ends[end].profile.n as f64;
        let power = -(n / p) * (1.0 + eps);
        let values = cut
            .values
            .iter()
            .enumerate()
            .map(|(v, &c)| if c == 0.0 { 0.0 } else { c * self.radius(v).powf(power) })
            .collect();
        Ok(RadialFunction {
            values,
            label: format!("witness(end={end}, p={p}, eps={eps}, ramp=[{}, {}])", ramp.0, ramp.1),
        })
    }

    /// `n · eps · ln(r_max)` for the witness on `end`.
    pub fn truncation_margin(&self, end: usize, eps: f64) -> f64 {
        let p = &self.ends[end].profile;
        p.n as f64 * eps * p.r_max.ln()
    }

    pub fn witness_truncation_ok(&self, end: usize, eps: f64) -> bool {
        self.truncation_margin(end, eps) >= 3.0
    }

    pub fn zeros(&self) -> RadialFunction {
        RadialFunction {
            values: vec![0.0; self.node_count()],
            label: "zero".into(),
        }
    }
}

/// `3s² − 2s³` clamped to `[0, 1]`.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialFunction {
    pub values: Vec<f64>,
    pub label: String,
}

impl RadialFunction {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            values,
            label: label.into(),
        }
    }

    /// Indices of nonzero entries.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
