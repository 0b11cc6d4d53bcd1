use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sqfn_core::bessel::{bessel_eval, default_s_grid, envelope_check, BesselSpec};
use sqfn_core::end_kernels::{check_bounds, default_k_grid, default_point_grid, BoundId, EndGeometry};
use sqfn_core::experiments::{
    l2_test_function, reverse_check, run_suite, sample_functions, witness_sweep,
};
use sqfn_core::highenergy::h_sup_bound;
use sqfn_core::radial_model::{build_model, EndProfile, ModelManifold, Site};
use sqfn_core::schur_verifier::{threshold_scan, Combiner, IntegralId, KernelEnvelope};
use sqfn_core::sqfn_engine::{
    horizontal_l2_constant, lp_norm, vertical_l2_constant, Kind, Range, SpectralGrid, SqfnEngine,
};

#[derive(Parser)]
#[command(name = "ends-sqfn", version, about = "Square functions on manifolds with ends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Dimensions of the ends, comma separated.
    #[arg(long, default_value = "3,4")]
    ends: String,
    #[arg(long, default_value_t = 1e9)]
    r_max: f64,
    /// Radial nodes per decade on every end.
    #[arg(long, default_value_t = 32)]
    ppd: usize,
    /// Spectral nodes per decade.
    #[arg(long, default_value_t = 32)]
    ppd_k: usize,
    /// Witness cutoff ramp `a,b`.
    #[arg(long, default_value = "1,2")]
    ramp: String,
}

impl ModelArgs {
    fn build(&self) -> Result<ModelManifold> {
        let ends = parse_list::<usize>(&self.ends)?
            .into_iter()
            .map(|n| EndProfile::new(n, self.r_max, self.ppd))
            .collect::<Vec<_>>();
        Ok(build_model(&ends)?)
    }

    fn ramp(&self) -> Result<(f64, f64)> {
        match parse_list::<f64>(&self.ramp)?.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => bail!("ramp must be two numbers `a,b`"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured suite and write CSV, SVG and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Evaluate the Bessel kernel G_a^d(s).
    Bessel {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        s: f64,
        /// Also fit the envelope on the default s grid.
        #[arg(long)]
        envelope: bool,
    },
    /// Check a kernel bound on an end R^n x T^m.
    Kernels {
        /// `n,m[,L...]`: flat dimension, torus dimension, circumferences.
        #[arg(long)]
        end: String,
        #[arg(long)]
        j: u32,
        #[arg(long)]
        bound: String,
    },
    /// Schur-test threshold scan for a kernel envelope.
    Schur {
        #[arg(long, default_value = "h3")]
        family: String,
        #[arg(long)]
        ni: usize,
        #[arg(long)]
        nj: usize,
        /// `start:stop:step`
        #[arg(long)]
        pgrid: String,
        /// Integral label; all labels when absent.
        #[arg(long)]
        integral: Option<String>,
        #[arg(long, default_value = "product")]
        combiner: String,
        #[arg(long = "M", default_value_t = 1)]
        order: u32,
        #[arg(long, default_value_t = 1e8)]
        r_outer: f64,
    },
    /// Fit sup |H| against C exp(-c k r).
    Highenergy {
        #[arg(long = "M")]
        order: u32,
        /// `start:stop[:step]`
        #[arg(long, default_value = "1:8")]
        rgrid: String,
        #[arg(long, default_value = "1:10")]
        kgrid: String,
    },
    /// L² ratio and resolution-of-identity residual on the model.
    L2const {
        #[arg(long = "M")]
        order: u32,
        #[arg(long, default_value = "vertical")]
        kind: String,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Witness sweep ratio vs 1/eps.
    Witness {
        #[arg(long = "M", default_value_t = 1)]
        order: u32,
        /// Exponents, comma separated.
        #[arg(long, default_value = "2,3")]
        p: String,
        #[arg(long, default_value = "vertical")]
        kind: String,
        #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
        eps: String,
        #[arg(long, default_value = "low")]
        range: String,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Max of ||f||_p / ||S f||_p over the sample set.
    Reverse {
        #[arg(long = "M", default_value_t = 1)]
        order: u32,
        #[arg(long, default_value = "2,2.5")]
        p: String,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Summarise a results directory.
    Report {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Model inspection.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// CSV of nodes, radii and measures.
    Dump {
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad value {t:?}: {e}")))
        .collect()
}

/// `a:b` (unit step) or `a:b:step`, inclusive of `b`.
fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts = parse_list_sep(s, ':')?;
    let (a, b, step) = match parts.as_slice() {
        [a, b] => (*a, *b, 1.0),
        [a, b, st] => (*a, *b, *st),
        _ => bail!("grid {s:?} must be start:stop or start:stop:step"),
    };
    if !(step > 0.0) || b < a {
        bail!("grid {s:?} needs stop >= start and a positive step");
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

fn parse_list_sep(s: &str, sep: char) -> Result<Vec<f64>> {
    s.split(sep)
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?}")))
        .collect()
}

fn print_json(v: serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

fn status(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let outcome = run_suite(&config, &out)
                .with_context(|| format!("running suite {}", config.display()))?;
            for e in &outcome.experiments {
                println!("{:<6} {:<32} {:>8.2}s", if e.pass { "PASS" } else { "FAIL" }, e.id, e.wall_time_s);
                for f in &e.failures {
                    println!("         {}: {}", f.contract, f.detail);
                }
            }
            println!("manifest: {}", outcome.manifest_path.display());
            Ok(status(outcome.pass))
        }
        Command::Bessel { a, d, s, envelope } => {
            let spec = BesselSpec::new(a, d);
            let value = bessel_eval(&spec, s)?;
            if envelope {
                let fit = envelope_check(&spec, &default_s_grid())?;
                print_json(json!({"a": a, "d": d, "s": s, "value": value, "envelope": fit}))?;
                Ok(status(fit.max_violation == 0.0))
            } else {
                print_json(json!({"a": a, "d": d, "s": s, "value": value}))?;
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Kernels { end, j, bound } => {
            let parts = parse_list_sep(&end, ',')?;
            if parts.len() < 2 {
                bail!("--end needs at least n,m");
            }
            let (n, m) = (parts[0] as usize, parts[1] as usize);
            let circ: Vec<f64> = if parts.len() > 2 {
                parts[2..].to_vec()
            } else {
                vec![2.0 * std::f64::consts::PI; m]
            };
            if circ.len() != m {
                bail!("expected {m} circumferences, got {}", circ.len());
            }
            let geom = if m == 0 { EndGeometry::euclidean(n) } else { EndGeometry::with_torus(n, circ) };
            let id = BoundId::parse(&bound)?;
            let rep = check_bounds(&geom, j, id, &default_k_grid(id), &default_point_grid(&geom))?;
            print_json(serde_json::to_value(&rep)?)?;
            Ok(status(rep.pass))
        }
        Command::Schur { family, ni, nj, pgrid, integral, combiner, order, r_outer } => {
            let comb = match combiner.as_str() {
                "product" => Combiner::Product,
                "min-of-two" | "min" => Combiner::MinOfTwo,
                other => bail!("unknown combiner {other:?}"),
            };
            let env = match family.as_str() {
                "h3" => KernelEnvelope::h3(ni, nj, order, comb),
                "w1" => KernelEnvelope::w1(ni, nj, order, comb),
                "w2" => KernelEnvelope::w2(ni, nj, order, comb),
                other => bail!("unknown family {other:?}"),
            };
            let ps = parse_range(&pgrid)?;
            let ids = match integral {
                Some(s) => vec![IntegralId::parse(&s)?],
                None => IntegralId::ALL.to_vec(),
            };
            let reports = ids
                .into_iter()
                .map(|id| threshold_scan(&env, id, ni, nj, &ps, r_outer))
                .collect::<sqfn_core::Result<Vec<_>>>()?;
            print_json(serde_json::to_value(&reports)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Highenergy { order, rgrid, kgrid } => {
            let fit = h_sup_bound(order, &parse_range(&rgrid)?, &parse_range(&kgrid)?)?;
            print_json(serde_json::to_value(&fit)?)?;
            Ok(status(fit.pass))
        }
        Command::L2const { order, kind, model } => {
            let kind = Kind::parse(&kind)?;
            let mm = model.build()?;
            let engine = SqfnEngine::new(&mm, SpectralGrid::for_model(&mm, model.ppd_k)?)?;
            let f = l2_test_function(&mm);
            let field = engine.field(kind, order, &f.values, Range::Full)?;
            let ratio = field.l2_squared(&mm) / lp_norm(&mm, &f.values, 2.0).powi(2);
            let expected = match kind {
                Kind::Vertical => vertical_l2_constant(order),
                Kind::Horizontal => horizontal_l2_constant(order),
            };
            let residual = engine.resolution_identity_residual(order, &f.values, kind)?;
            print_json(json!({
                "M": order, "kind": kind, "ratio": ratio, "expected": expected,
                "identity_residual": residual,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Witness { order, p, kind, eps, range, model } => {
            let kind = Kind::parse(&kind)?;
            let range = Range::parse(&range)?;
            let mm = model.build()?;
            let engine = SqfnEngine::new(&mm, SpectralGrid::for_model(&mm, model.ppd_k)?)?;
            let eps = parse_list::<f64>(&eps)?;
            let sweeps = parse_list::<f64>(&p)?
                .into_iter()
                .map(|pv| witness_sweep(&engine, order, pv, &eps, kind, range, model.ramp()?).map_err(Into::into))
                .collect::<Result<Vec<_>>>()?;
            print_json(serde_json::to_value(&sweeps)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Reverse { order, p, model } => {
            let mm = model.build()?;
            let engine = SqfnEngine::new(&mm, SpectralGrid::for_model(&mm, model.ppd_k)?)?;
            let mut reports = Vec::new();
            for pv in parse_list::<f64>(&p)? {
                let samples = sample_functions(&mm, pv, model.ramp()?)?;
                reports.push(reverse_check(&engine, order, pv, &samples, Range::Full)?);
            }
            print_json(serde_json::to_value(&reports)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { out } => {
            let path = out.join("manifest.json");
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            println!("config hash: {}", manifest["config_hash"].as_str().unwrap_or("?"));
            let exps = manifest["experiments"].as_array().cloned().unwrap_or_default();
            for e in &exps {
                let pass = e["pass"].as_bool().unwrap_or(false);
                println!(
                    "{:<6} {:<32} {:<10} {}",
                    if pass { "PASS" } else { "FAIL" },
                    e["id"].as_str().unwrap_or("?"),
                    e["kind"].as_str().unwrap_or("?"),
                    e["csv"].as_str().unwrap_or("")
                );
                for f in e["failures"].as_array().into_iter().flatten() {
                    println!("         {}: {}", f["contract"].as_str().unwrap_or(""), f["detail"].as_str().unwrap_or(""));
                }
            }
            let pass = manifest["pass"].as_bool().unwrap_or(false);
            println!("{} experiments, overall {}", exps.len(), if pass { "PASS" } else { "FAIL" });
            Ok(status(pass))
        }
        Command::Model { action: ModelAction::Dump { model } } => {
            let mm = model.build()?;
            let mut out = std::io::BufWriter::new(std::io::stdout().lock());
            writeln!(out, "node,site,end,index,radius,measure")?;
            for v in 0..mm.node_count() {
                let (site, end, index) = match mm.sites[v] {
                    Site::Hub => ("hub", String::new(), String::new()),
                    Site::End { end, index } => ("end", end.to_string(), index.to_string()),
                };
                writeln!(out, "{v},{site},{end},{index},{},{}", mm.radius(v), mm.measure[v])?;
            }
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
