//! Direct solver for the shifted model Laplacian.
//!
//! The model graph is a star of paths, so `L + k² D_μ` factors as `LDLᵀ` with
//! no fill-in by eliminating every end from its outer boundary toward the hub.

use serde::{Deserialize, Serialize};

use crate::radial_model::ModelManifold;
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct EndFactor {
    offset: usize,
    hub_cond: f64,
    /// `couple[j]` links node `j` and `j + 1`.
    couple: Vec<f64>,
    pivots: Vec<f64>,
}

/// Factorization of `L + k² D_μ` for one `k`.
#[derive(Debug, Clone)]
pub struct StarFactor {
    pub k: f64,
    hub_pivot: f64,
    ends: Vec<EndFactor>,
}

impl StarFactor {
    pub fn new(model: &ModelManifold, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Domain(format!("shift k must be positive, got {k}")));
        }
        let k2 = k * k;
        let mut hub_diag = k2 * model.measure[0];
        let mut ends = Vec::with_capacity(model.ends.len());
        for lay in &model.ends {
            let count = lay.radii.len();
            let hub_cond = model.edges[lay.first_edge].cond;
            let outward: Vec<f64> = (0..count)
                .map(|j| model.edges[lay.first_edge + 1 + j].cond)
                .collect();
            let mut pivots = vec![0.0; count];
            for j in (0..count).rev() {
                let inward = if j == 0 { hub_cond } else { outward[j - 1] };
                let mut d = inward + outward[j] + k2 * model.measure[lay.offset + j];
                if j + 1 < count {
                    d -= outward[j] * outward[j] / pivots[j + 1];
                }
                if !(d > 0.0) {
                    return Err(Error::SolverBreakdown { k, pivot: d });
                }
                pivots[j] = d;
            }
            hub_diag += hub_cond - hub_cond * hub_cond / pivots[0];
            ends.push(EndFactor {
                offset: lay.offset,
                hub_cond,
                couple: outward[..count - 1].to_vec(),
                pivots,
            });
        }
        if !(hub_diag > 0.0) {
            return Err(Error::SolverBreakdown { k, pivot: hub_diag });
        }
        Ok(Self {
            k,
            hub_pivot: hub_diag,
            ends,
        })
    }

    /// Solves `(L + k² D_μ) x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let mut hub = x[0];
        for e in &self.ends {
            let o = e.offset;
            let count = e.pivots.len();
            for j in (0..count - 1).rev() {
                x[o + j] += e.couple[j] * x[o + j + 1] / e.pivots[j + 1];
            }
            hub += e.hub_cond * x[o] / e.pivots[0];
        }
        let xh = hub / self.hub_pivot;
        x[0] = xh;
        for e in &self.ends {
            let o = e.offset;
            x[o] = (x[o] + e.hub_cond * xh) / e.pivots[0];
            for j in 0..e.pivots.len() - 1 {
                x[o + j + 1] = (x[o + j + 1] + e.couple[j] * x[o + j]) / e.pivots[j + 1];
            }
        }
    }

    /// `(Δ + k²)^{-1} f`, i.e. solves with right-hand side `D_μ f`.
    pub fn resolvent(&self, model: &ModelManifold, f: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = f.iter().zip(&model.measure).map(|(a, m)| a * m).collect();
        self.solve_in_place(&mut x);
        x
    }

    /// `(Δ + k²)^{-power} f` by repeated solves with this factorization.
    pub fn resolvent_power(&self, model: &ModelManifold, power: u32, f: &[f64]) -> Vec<f64> {
        let mut u = f.to_vec();
        for _ in 0..power {
            u = self.resolvent(model, &u);
        }
        u
    }
}

/// `(Δ + k²) u`.
pub fn shifted_apply(model: &ModelManifold, k: f64, u: &[f64]) -> Vec<f64> {
    let mut out = model.laplacian_apply(u);
    for (o, v) in out.iter_mut().zip(u) {
        *o += k * k * v;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub k: f64,
    #[serde(rename = "M")]
    pub order: u32,
    /// Largest `‖(Δ+k²)u_i − u_{i−1}‖ / ‖u_{i−1}‖` over the M first-order solves.
    pub residual: f64,
    /// `‖(Δ+k²)^M u − f‖ / ‖f‖`; roundoff-limited once `k²` is far below the top of the spectrum.
    pub round_trip: f64,
    pub factorization_reused: bool,
}

pub const SOLVE_TOL: f64 = 1e-10;
