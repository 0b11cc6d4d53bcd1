//! Witness sweeps, reverse-inequality checks and the reproducible suite runner.

pub mod config;
pub mod suite;
pub mod svg;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::radial_model::{ModelManifold, RadialFunction};
use crate::sqfn_engine::{lp_norm, Kind, Range, SqfnEngine};
use crate::stats::fit_line;
use crate::{Error, Result};

pub use config::{ExperimentSpec, SuiteConfig};
pub use suite::{run_suite, SuiteOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub node_count: usize,
    pub points_per_decade: Vec<usize>,
    pub r_max: Vec<f64>,
    pub k_lo: f64,
    pub k_hi: f64,
    pub points_per_decade_k: usize,
}

impl GridMeta {
    pub fn of(engine: &SqfnEngine) -> Self {
        let m = engine.model;
        Self {
            node_count: m.node_count(),
            points_per_decade: m.ends.iter().map(|e| e.profile.points_per_decade).collect(),
            r_max: m.ends.iter().map(|e| e.profile.r_max).collect(),
            k_lo: engine.grid.k_lo,
            k_hi: engine.grid.k_hi,
            points_per_decade_k: engine.grid.points_per_decade_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment_id: String,
    pub config_hash: String,
    #[serde(rename = "M")]
    pub order: u32,
    pub p: f64,
    pub eps: Option<f64>,
    pub range: Range,
    pub input_norm: f64,
    pub output_norm: f64,
    pub ratio: f64,
    pub slope: Option<f64>,
    pub wall_time_s: f64,
    pub grid: GridMeta,
}

impl ExperimentRecord {
    /// CSV columns; wall time is kept out so reruns stay byte-identical.
    pub const CSV_HEADER: [&'static str; 12] = [
        "experiment_id",
        "config_hash",
        "M",
        "p",
        "eps",
        "range",
        "input_norm",
        "output_norm",
        "ratio",
        "slope",
        "node_count",
        "points_per_decade_k",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.experiment_id.clone(),
            self.config_hash.clone(),
            self.order.to_string(),
            self.p.to_string(),
            opt(self.eps),
            format!("{:?}", self.range).to_lowercase(),
            self.input_norm.to_string(),
            self.output_norm.to_string(),
            self.ratio.to_string(),
            opt(self.slope),
            self.grid.node_count.to_string(),
            self.grid.points_per_decade_k.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: Kind,
    #[serde(rename = "M")]
    pub order: u32,
    pub p: f64,
    pub end: usize,
    pub range: Range,
    pub eps_grid: Vec<f64>,
    pub input_norms: Vec<f64>,
    pub output_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log ratio` against `log(1/ε)`.
    pub slope: f64,
    pub slope_stderr: f64,
}

fn square_function(engine: &SqfnEngine, kind: Kind, order: u32, f: &[f64], range: Range) -> Result<Vec<f64>> {
    Ok(engine.field(kind, order, f, range)?.node_values)
}

/// `‖S f_ε‖_p / ‖f_ε‖_p` over `eps_grid` on the end of smallest dimension.
pub fn witness_sweep(
    engine: &SqfnEngine,
    order: u32,
    p: f64,
    eps_grid: &[f64],
    kind: Kind,
    range: Range,
    ramp: (f64, f64),
) -> Result<SweepResult> {
    let model = engine.model;
    if kind == Kind::Vertical && 2 * order as usize >= model.n_min {
        return Err(Error::Domain(format!(
            "vertical witness needs 2M < n_min (M = {order}, n_min = {})",
            model.n_min
        )));
    }
    if eps_grid.len() < 4 || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("eps grid must be strictly decreasing with at least 4 points".into()));
    }
    let end = model.min_dimension_end();
    if let Some(&eps) = eps_grid.iter().find(|&&e| !model.witness_truncation_ok(end, e)) {
        return Err(Error::Domain(format!(
            "eps = {eps} is below the truncation guard (n·eps·ln r_max = {:.2} < 3)",
            model.truncation_margin(end, eps)
        )));
    }
    let mut input_norms = Vec::new();
    let mut output_norms = Vec::new();
    let mut ratios = Vec::new();
    for &eps in eps_grid {
        let f = model.witness_function(end, p, eps, ramp)?;
        let s = square_function(engine, kind, order, &f.values, range)?;
        let a = lp_norm(model, &f.values, p);
        let b = lp_norm(model, &s, p);
        input_norms.push(a);
        output_norms.push(b);
        ratios.push(b / a);
    }
    let x: Vec<f64> = eps_grid.iter().map(|e| (1.0 / e).ln()).collect();
    let y: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let fit = fit_line(&x, &y).ok_or_else(|| Error::FitFailure("witness slope".into()))?;
    if !fit.slope.is_finite() {
        return Err(Error::FitFailure(format!("non-finite witness slope at p = {p}")));
    }
    Ok(SweepResult {
        kind,
        order,
        p,
        end,
        range,
        eps_grid: eps_grid.to_vec(),
        input_norms,
        output_norms,
        ratios,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseSample {
    pub label: String,
    pub input_norm: f64,
    pub output_norm: f64,
    /// `None` for the zero function.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseReport {
    #[serde(rename = "M")]
    pub order: u32,
    pub p: f64,
    pub samples: Vec<ReverseSample>,
    pub max_ratio: f64,
}

/// Maximum of `‖f‖_p / ‖S f‖_p` (vertical) over `samples`.
pub fn reverse_check(
    engine: &SqfnEngine,
    order: u32,
    p: f64,
    samples: &[RadialFunction],
    range: Range,
) -> Result<ReverseReport> {
    let model = engine.model;
    let mut out = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for f in samples {
        let a = lp_norm(model, &f.values, p);
        if a == 0.0 {
            out.push(ReverseSample {
                label: f.label.clone(),
                input_norm: 0.0,
                output_norm: 0.0,
                ratio: None,
            });
            continue;
        }
        let s = square_function(engine, Kind::Vertical, order, &f.values, range)?;
        let b = lp_norm(model, &s, p);
        let r = a / b;
        max_ratio = max_ratio.max(r);
        out.push(ReverseSample {
            label: f.label.clone(),
            input_norm: a,
            output_norm: b,
            ratio: Some(r),
        });
    }
    if !(max_ratio > 0.0 && max_ratio.is_finite()) {
        return Err(Error::Domain("no admissible sample with a finite ratio".into()));
    }
    Ok(ReverseReport {
        order,
        p,
        samples: out,
        max_ratio,
    })
}

/// `sin²(π t)` bump for `t = ln(r/a)/ln(b/a) ∈ [0, 1]`, times `cos(2π·waves·t)`.
fn log_bump(model: &ModelManifold, end: usize, a: f64, b: f64, waves: f64, label: String) -> RadialFunction {
    let lay = &model.ends[end];
    let mut values = vec![0.0; model.node_count()];
    for (j, &r) in lay.radii.iter().enumerate() {
        let t = (r / a).ln() / (b / a).ln();
        if (0.0..=1.0).contains(&t) {
            values[lay.offset + j] = (PI * t).sin().powi(2) * (2.0 * PI * waves * t).cos();
        }
    }
    RadialFunction::new(values, label)
}

/// Bump, oscillatory and witness-type samples on every end, away from `r_max`.
pub fn sample_functions(model: &ModelManifold, p: f64, ramp: (f64, f64)) -> Result<Vec<RadialFunction>> {
    let mut out = Vec::new();
    for (i, lay) in model.ends.iter().enumerate() {
        let top = lay.profile.r_max / 100.0;
        if top < 1e3 {
            return Err(Error::Domain(format!("end {i}: r_max too small for the sample set")));
        }
        out.push(log_bump(model, i, 4.0, 64.0, 0.0, format!("bump(end={i})")));
        out.push(log_bump(model, i, 4.0, 1024.0, 4.0, format!("oscillatory(end={i})")));
        out.push(model.witness_function(i, p.min(20.0), 0.2, ramp)?);
    }
    let sum: Vec<f64> = (0..model.node_count())
        .map(|v| out.iter().step_by(3).map(|f| f.values[v]).sum())
        .collect();
    out.push(RadialFunction::new(sum, "bumps(all ends)"));
    out.push(model.zeros());
    Ok(out)
}

/// Smooth test function spread over all ends for the L² checks.
pub fn l2_test_function(model: &ModelManifold) -> RadialFunction {
    let mut values = vec![0.0; model.node_count()];
    for i in 0..model.ends.len() {
        let b = log_bump(model, i, 2.0, 200.0, 0.0, String::new());
        let o = log_bump(model, i, 10.0, 1000.0, 2.0, String::new());
        for (v, (x, y)) in values.iter_mut().zip(b.values.iter().zip(&o.values)) {
            *v += x + 0.5 * y;
        }
    }
    values[0] = 0.0;
    RadialFunction::new(values, "l2-test")
}
