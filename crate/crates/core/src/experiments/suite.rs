//! Deterministic suite runner: CSV per experiment, SVG plots and a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentSpec, Family, ModelConfig, SuiteConfig};
use super::svg::{Plot, Series};
use super::{
    l2_test_function, reverse_check, sample_functions, witness_sweep, ExperimentRecord, GridMeta,
};
use crate::bessel::{bessel_eval, default_s_grid, envelope_check, BesselSpec};
use crate::highenergy::{h_sup_bound, split_eval, SplitSpec};
use crate::radial_model::{build_model, EndProfile, ModelManifold};
use crate::schur_verifier::{threshold_scan, IntegralId, KernelEnvelope, Verdict};
use crate::sqfn_engine::{
    horizontal_l2_constant, lp_norm, vertical_l2_constant, Kind, SpectralGrid, SqfnEngine,
};
use crate::{Error, Result};

pub const HUB_MEASURE_CONVENTION: &str =
    "hub mass = sum over ends of r_min^n / n; hub edge runs from the virtual radius r_min * 10^(-1/points_per_decade)";
pub const SUPPORT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub experiment: String,
    pub contract: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub id: String,
    pub kind: String,
    pub pass: bool,
    pub csv: String,
    pub svg: String,
    pub wall_time_s: f64,
    pub summary: Value,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub pass: bool,
    pub manifest_path: PathBuf,
    pub experiments: Vec<ExperimentEntry>,
    pub failures: Vec<Failure>,
}

struct Output {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    plot: Plot,
    summary: Value,
    failures: Vec<(String, String)>,
}

impl Output {
    fn new(header: &[&str], plot: Plot) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            plot,
            summary: Value::Null,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, contract: impl Into<String>, detail: impl Into<String>) {
        self.failures.push((contract.into(), detail.into()));
    }
}

fn plot(title: &str, x: &str, y: &str, log_x: bool, log_y: bool) -> Plot {
    Plot {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        log_x,
        log_y,
        series: Vec::new(),
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

struct Context<'a> {
    hash: String,
    model_cfg: Option<&'a ModelConfig>,
    ppd_k: usize,
    engine: Option<SqfnEngine<'a>>,
}

impl Context<'_> {
    fn engine(&self) -> Result<&SqfnEngine<'_>> {
        self.engine
            .as_ref()
            .ok_or_else(|| Error::Config("experiment needs a [model] section".into()))
    }

    fn ramp(&self) -> (f64, f64) {
        let r = self.model_cfg.map(|m| m.ramp).unwrap_or([1.0, 2.0]);
        (r[0], r[1])
    }
}

fn refined(ends: &[EndProfile]) -> Vec<EndProfile> {
    ends.iter()
        .map(|e| EndProfile {
            points_per_decade: 2 * e.points_per_decade,
            ..e.clone()
        })
        .collect()
}

fn run_witness(ctx: &Context, id: &str, spec: &ExperimentSpec) -> Result<Output> {
    let ExperimentSpec::Witness { sqfn, order, p, eps, range, targets } = spec else {
        unreachable!()
    };
    let engine = ctx.engine()?;
    let n_min = engine.model.n_min as f64;
    let mut out = Output::new(
        &ExperimentRecord::CSV_HEADER,
        plot(&format!("{id}: ratio vs 1/eps"), "1/eps", "||S f_eps||_p / ||f_eps||_p", true, true),
    );
    let mut slopes = Vec::new();
    for &pv in p {
        let t0 = Instant::now();
        let sweep = witness_sweep(engine, *order, pv, eps, *sqfn, *range, ctx.ramp())?;
        let wall = t0.elapsed().as_secs_f64();
        for (i, &e) in sweep.eps_grid.iter().enumerate() {
            let rec = ExperimentRecord {
                experiment_id: id.to_string(),
                config_hash: ctx.hash.clone(),
                order: *order,
                p: pv,
                eps: Some(e),
                range: *range,
                input_norm: sweep.input_norms[i],
                output_norm: sweep.output_norms[i],
                ratio: sweep.ratios[i],
                slope: Some(sweep.slope),
                wall_time_s: wall,
                grid: GridMeta::of(engine),
            };
            out.rows.push(rec.csv_row());
        }
        out.plot.series.push(Series {
            label: format!("p = {pv} (slope {:.3})", sweep.slope),
            points: sweep.eps_grid.iter().zip(&sweep.ratios).map(|(e, r)| (1.0 / e, *r)).collect(),
        });
        slopes.push(json!({"p": pv, "slope": sweep.slope, "slope_stderr": sweep.slope_stderr}));

        let s = sweep.slope;
        match sqfn {
            Kind::Vertical if pv >= n_min && s < 0.4 => {
                out.fail("slope >= 0.4 at p >= n_min", format!("p = {pv}: slope {s:.4}"))
            }
            Kind::Vertical if pv <= n_min - 0.5 && s.abs() > 0.1 => {
                out.fail("|slope| <= 0.1 at p <= n_min - 0.5", format!("p = {pv}: slope {s:.4}"))
            }
            Kind::Horizontal if s.abs() > 0.1 => {
                out.fail("horizontal |slope| <= 0.1", format!("p = {pv}: slope {s:.4}"))
            }
            _ => {}
        }
        for t in targets.iter().filter(|t| t.p == pv) {
            if (s - t.slope).abs() > t.tol {
                out.fail(
                    format!("slope = {} +- {} at p = {}", t.slope, t.tol, t.p),
                    format!("slope {s:.4}"),
                );
            }
        }
    }
    for t in targets {
        if !p.contains(&t.p) {
            out.fail("target p in sweep", format!("p = {} was not run", t.p));
        }
    }
    out.summary = json!({ "slopes": slopes });
    Ok(out)
}

fn run_reverse(ctx: &Context, id: &str, spec: &ExperimentSpec) -> Result<Output> {
    let ExperimentSpec::Reverse { order, p, range, targets, stability } = spec else {
        unreachable!()
    };
    let engine = ctx.engine()?;
    let model_cfg = ctx.model_cfg.expect("model present with engine");
    let fine_model = build_model(&refined(&model_cfg.ends))?;
    let fine_grid = SpectralGrid::for_model(&fine_model, 2 * ctx.ppd_k)?;
    let fine = SqfnEngine::new(&fine_model, fine_grid)?;
    let mut out = Output::new(
        &["experiment_id", "config_hash", "M", "p", "sample", "input_norm", "output_norm", "ratio", "resolution"],
        plot(&format!("{id}: max ||f||_p / ||S f||_p"), "p", "max ratio", false, false),
    );
    let mut coarse_pts = Vec::new();
    let mut fine_pts = Vec::new();
    let mut summary = Vec::new();
    for &pv in p {
        let mut maxima = Vec::new();
        for (label, eng) in [("base", engine), ("refined", &fine)] {
            let samples = sample_functions(eng.model, pv, ctx.ramp())?;
            let rep = reverse_check(eng, *order, pv, &samples, *range)?;
            for s in &rep.samples {
                out.rows.push(vec![
                    id.to_string(),
                    ctx.hash.clone(),
                    order.to_string(),
                    num(pv),
                    s.label.clone(),
                    num(s.input_norm),
                    num(s.output_norm),
                    s.ratio.map(num).unwrap_or_default(),
                    label.to_string(),
                ]);
            }
            maxima.push(rep.max_ratio);
        }
        let (a, b) = (maxima[0], maxima[1]);
        coarse_pts.push((pv, a));
        fine_pts.push((pv, b));
        let change = (b - a).abs() / a;
        summary.push(json!({"p": pv, "max_ratio": a, "max_ratio_refined": b, "relative_change": change}));
        if !(a.is_finite() && b.is_finite()) {
            out.fail("finite ratio", format!("p = {pv}"));
        }
        if change >= *stability {
            out.fail(
                format!("grid-stable max ratio (< {stability})"),
                format!("p = {pv}: {a:.5} -> {b:.5}"),
            );
        }
        for t in targets.iter().filter(|t| t.p == pv) {
            if (a / t.ratio - 1.0).abs() > t.tol {
                out.fail(
                    format!("max ratio = {} +- {}% at p = {}", t.ratio, 100.0 * t.tol, t.p),
                    format!("{a:.5}"),
                );
            }
        }
    }
    out.plot.series.push(Series {
        label: "base".into(),
        points: coarse_pts,
    });
    out.plot.series.push(Series {
        label: "refined".into(),
        points: fine_pts,
    });
    out.summary = json!({ "by_p": summary });
    Ok(out)
}

fn run_l2(ctx: &Context, id: &str, spec: &ExperimentSpec) -> Result<Output> {
    let ExperimentSpec::L2const { sqfn, order, tol, identity_constant } = spec else {
        unreachable!()
    };
    let engine = ctx.engine()?;
    let model = engine.model;
    let f = l2_test_function(model);
    let field = engine.field(*sqfn, *order, &f.values, crate::sqfn_engine::Range::Full)?;
    let ratio = field.l2_squared(model) / lp_norm(model, &f.values, 2.0).powi(2);
    let expected = match sqfn {
        Kind::Vertical => vertical_l2_constant(*order),
        Kind::Horizontal => horizontal_l2_constant(*order),
    };
    let residual = engine.resolution_identity_residual(*order, &f.values, *sqfn)?;
    let analytic_c = match sqfn {
        Kind::Vertical => 2.0 * (2.0 * *order as f64 - 1.0),
        Kind::Horizontal => (2.0 * *order as f64 - 1.0) * (2.0 * *order as f64 - 2.0),
    };
    let mut out = Output::new(
        &["experiment_id", "config_hash", "kind", "M", "ratio", "expected", "identity_constant", "identity_residual"],
        plot(&format!("{id}: f and its square function (end 0)"), "r", "value", true, false),
    );
    out.rows.push(vec![
        id.to_string(),
        ctx.hash.clone(),
        format!("{sqfn:?}").to_lowercase(),
        order.to_string(),
        num(ratio),
        num(expected),
        num(analytic_c),
        num(residual),
    ]);
    let lay = &model.ends[0];
    let pick = |vals: &[f64]| -> Vec<(f64, f64)> {
        lay.radii.iter().enumerate().map(|(j, &r)| (r, vals[lay.offset + j])).collect()
    };
    out.plot.series.push(Series {
        label: "f".into(),
        points: pick(&f.values),
    });
    out.plot.series.push(Series {
        label: "square function".into(),
        points: pick(&field.node_values),
    });
    if (ratio / expected - 1.0).abs() > *tol {
        out.fail(format!("L2 ratio = {expected:.6} +- {}%", 100.0 * tol), format!("{ratio:.6}"));
    }
    if let Some(c) = identity_constant {
        if (c - analytic_c).abs() > 1e-12 {
            out.fail("identity constant", format!("configured {c}, analytic {analytic_c}"));
        }
        if residual > *tol {
            out.fail(format!("identity residual <= {tol}"), format!("{residual:.5}"));
        }
    }
    out.summary = json!({"ratio": ratio, "expected": expected, "identity_residual": residual});
    Ok(out)
}

fn run_schur(ctx: &Context, id: &str, spec: &ExperimentSpec) -> Result<Output> {
    let ExperimentSpec::Schur { family, combiner, ni, nj, order, integrals, p, r_outer, cutoff_tol } = spec else {
        unreachable!()
    };
    let env = match family {
        Family::H3 => KernelEnvelope::h3(*ni, *nj, *order, *combiner),
        Family::W1 => KernelEnvelope::w1(*ni, *nj, *order, *combiner),
        Family::W2 => KernelEnvelope::w2(*ni, *nj, *order, *combiner),
    };
    let mut out = Output::new(
        &["experiment_id", "config_hash", "integral", "p", "verdict", "tail_exponent", "inconclusive", "value"],
        plot(&format!("{id}: tail exponent vs p"), "p", "tail exponent", false, false),
    );
    let mut summary = Vec::new();
    for name in integrals {
        let iid = IntegralId::parse(name)?;
        let rep = threshold_scan(&env, iid, *ni, *nj, p, *r_outer)?;
        for r in &rep.rows {
            out.rows.push(vec![
                id.to_string(),
                ctx.hash.clone(),
                iid.name().to_string(),
                num(r.p),
                format!("{:?}", r.verdict).to_lowercase(),
                r.tail_exponent.map(num).unwrap_or_default(),
                r.inconclusive.to_string(),
                num(r.value),
            ]);
        }
        out.plot.series.push(Series {
            label: iid.name().into(),
            points: rep.rows.iter().filter_map(|r| r.tail_exponent.map(|e| (r.p, e))).collect(),
        });
        match rep.predicted_cutoff {
            Some(pc) if p.iter().any(|&v| v > pc) => match rep.detected_cutoff {
                Some(d) if (d - pc).abs() <= *cutoff_tol => {}
                other => out.fail(
                    format!("{} cutoff = {pc} +- {cutoff_tol}", iid.name()),
                    format!("detected {other:?}"),
                ),
            },
            _ => {
                for r in rep.rows.iter().filter(|r| r.verdict != Verdict::Finite) {
                    out.fail(format!("{} finite", iid.name()), format!("p = {}", r.p));
                }
            }
        }
        summary.push(json!({
            "integral": iid.name(),
            "detected_cutoff": rep.detected_cutoff,
            "predicted_cutoff": rep.predicted_cutoff,
        }));
    }
    out.summary = json!({ "integrals": summary });
    Ok(out)
}

fn run_highenergy(ctx: &Context, id: &str, spec: &ExperimentSpec) -> Result<Output> {
    let ExperimentSpec::Highenergy { orders, r, k } = spec else {
        unreachable!()
    };
    let mut out = Output::new(
        &["experiment_id", "config_hash", "M", "r", "k", "sup_h", "fit_C", "fit_c"],
        plot(&format!("{id}: sup |H| vs kr"), "kr", "sup |H|", false, true),
    );
    let mut summary = Vec::new();
    for &m in orders {
        let fit = h_sup_bound(m, r, k)?;
        for s in &fit.samples {
            out.rows.push(vec![
                id.to_string(),
                ctx.hash.clone(),
                m.to_string(),
                num(s.r),
                num(s.k),
                num(s.sup),
                num(fit.fit.big_c),
                num(fit.fit.c),
            ]);
        }
        let mut pts: Vec<(f64, f64)> = fit.samples.iter().map(|s| (s.k * s.r, s.sup)).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.plot.series.push(Series {
            label: format!("M = {m}"),
            points: pts,
        });
        if !fit.pass {
            out.fail(
                "sup|H| ~ C exp(-c k r), c >= 0.3, deviation <= 25%",
                format!(
                    "M = {m}: c = {:.3}, deviation {:.3} at (r, k) = {:?}",
                    fit.fit.c, fit.fit.max_deviation, fit.offending
                ),
            );
        }
        let mut support = 0.0f64;
        let corners = [(r[0], k[0]), (r[r.len() - 1], k[k.len() - 1])];
        for (rv, kv) in corners {
            let split = split_eval(&SplitSpec::new(m, rv, kv))?;
            support = support.max(split.h_hat_inner_max);
            if split.reconstruction_error > 1e-8 {
                out.fail("G + H reconstruction <= 1e-8", format!("M = {m}, r = {rv}, k = {kv}"));
            }
        }
        if support > SUPPORT_TOL {
            out.fail("H-hat vanishes on |xi| <= r/2", format!("M = {m}: {support:e}"));
        }
        summary.push(json!({"M": m, "fit": fit.fit, "scaled_fit": fit.scaled_fit, "support_max": support}));
    }
    out.summary = json!({ "orders": summary });
    Ok(out)
}

fn run_bessel(ctx: &Context, id: &str, spec: &ExperimentSpec) -> Result<Output> {
    let ExperimentSpec::Bessel { cases } = spec else { unreachable!() };
    let mut out = Output::new(
        &["experiment_id", "config_hash", "a", "d", "regime", "c_lower", "c_upper", "C_lower", "C_upper", "max_violation"],
        plot(&format!("{id}: G_a^d(s)"), "s", "G", true, true),
    );
    let grid = default_s_grid();
    for &[a, d] in cases {
        let spec = BesselSpec::new(a, d);
        let fit = envelope_check(&spec, &grid)?;
        out.rows.push(vec![
            id.to_string(),
            ctx.hash.clone(),
            num(a),
            num(d),
            format!("{:?}", fit.regime),
            num(fit.c_lower),
            num(fit.c_upper),
            num(fit.big_c_lower),
            num(fit.big_c_upper),
            num(fit.max_violation),
        ]);
        let pts = grid
            .iter()
            .map(|&s| Ok((s, bessel_eval(&spec, s)?)))
            .collect::<Result<Vec<_>>>()?;
        out.plot.series.push(Series {
            label: format!("a = {a}, d = {d}"),
            points: pts,
        });
        if fit.max_violation != 0.0 {
            out.fail("envelope max_violation = 0", format!("a = {a}, d = {d}: {:e}", fit.max_violation));
        }
    }
    Ok(out)
}

fn csv_bytes(out: &Output) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&out.header)?;
    for row in &out.rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every configured experiment and writes CSV, SVG and `manifest.json` into `out_dir`.
pub fn run_suite(config_path: &Path, out_dir: &Path) -> Result<SuiteOutcome> {
    let text = fs::read_to_string(config_path)?;
    let cfg = SuiteConfig::parse(&text)?;
    run_config(&cfg, &config_hash(&text), out_dir)
}

pub fn run_config(cfg: &SuiteConfig, hash: &str, out_dir: &Path) -> Result<SuiteOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let needs_model = cfg.experiments.values().any(|e| {
        matches!(
            e,
            ExperimentSpec::Witness { .. } | ExperimentSpec::Reverse { .. } | ExperimentSpec::L2const { .. }
        )
    });
    let model: Option<ModelManifold> = match (&cfg.model, needs_model) {
        (Some(m), true) => Some(build_model(&m.ends)?),
        _ => None,
    };
    let engine = match &model {
        Some(m) => Some(SqfnEngine::new(m, SpectralGrid::for_model(m, cfg.grid.points_per_decade_k)?)?),
        None => None,
    };
    let ctx = Context {
        hash: hash.to_string(),
        model_cfg: cfg.model.as_ref(),
        ppd_k: cfg.grid.points_per_decade_k,
        engine,
    };

    let mut entries = Vec::new();
    let mut all_failures = Vec::new();
    for (id, spec) in &cfg.experiments {
        log::info!("running {id} ({})", spec.kind_name());
        let t0 = Instant::now();
        let out = match spec {
            ExperimentSpec::Witness { .. } => run_witness(&ctx, id, spec),
            ExperimentSpec::Reverse { .. } => run_reverse(&ctx, id, spec),
            ExperimentSpec::L2const { .. } => run_l2(&ctx, id, spec),
            ExperimentSpec::Schur { .. } => run_schur(&ctx, id, spec),
            ExperimentSpec::Highenergy { .. } => run_highenergy(&ctx, id, spec),
            ExperimentSpec::Bessel { .. } => run_bessel(&ctx, id, spec),
        }?;
        let wall = t0.elapsed().as_secs_f64();
        let csv_name = format!("{id}.csv");
        let svg_name = format!("{id}.svg");
        fs::write(out_dir.join(&csv_name), csv_bytes(&out)?)?;
        fs::write(out_dir.join(&svg_name), out.plot.render())?;
        let failures: Vec<Failure> = out
            .failures
            .iter()
            .map(|(c, d)| Failure {
                experiment: id.clone(),
                contract: c.clone(),
                detail: d.clone(),
            })
            .collect();
        for f in &failures {
            log::warn!("{}: {} ({})", f.experiment, f.contract, f.detail);
        }
        all_failures.extend(failures.iter().cloned());
        entries.push(ExperimentEntry {
            id: id.clone(),
            kind: spec.kind_name().to_string(),
            pass: failures.is_empty(),
            csv: csv_name,
            svg: svg_name,
            wall_time_s: wall,
            summary: out.summary,
            failures,
        });
    }

    let pass = all_failures.is_empty();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "format": 1,
        "package": {"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")},
        "config_hash": hash,
        "created_unix": created,
        "hub_measure_convention": HUB_MEASURE_CONVENTION,
        "model": cfg.model.as_ref().map(|m| json!({
            "ends": m.ends,
            "ramp": m.ramp,
            "node_count": model.as_ref().map(|x| x.node_count()),
        })),
        "grid": {"points_per_decade_k": cfg.grid.points_per_decade_k},
        "tolerances": {
            "solve_residual": crate::solver::SOLVE_TOL,
            "schur_exponent": crate::schur_verifier::TOL_EXP,
            "highenergy_max_deviation": crate::highenergy::H_FIT_MAX_DEVIATION,
            "highenergy_min_rate": crate::highenergy::H_FIT_MIN_RATE,
            "highenergy_support": SUPPORT_TOL,
            "kernel_holdout_slack": crate::end_kernels::HOLDOUT_SLACK,
        },
        "experiments": entries,
        "failures": all_failures,
        "pass": pass,
    });
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(SuiteOutcome {
        pass,
        manifest_path,
        experiments: entries,
        failures: all_failures,
    })
}
