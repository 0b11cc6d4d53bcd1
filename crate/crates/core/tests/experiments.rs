use std::fs;

use sqfn_core::experiments::suite::{config_hash, run_config};
use sqfn_core::experiments::*;
use sqfn_core::radial_model::*;
use sqfn_core::sqfn_engine::*;

const SMALL_MODEL: &str = r#"
[model]
ramp = [1.0, 2.0]
[[model.ends]]
n = 3
r_max = 1e5
points_per_decade = 24
[[model.ends]]
n = 4
r_max = 1e5
points_per_decade = 24
[grid]
points_per_decade_k = 16
"#;

const SMALL_SUITE: &str = r#"
[experiments.b]
kind = "bessel"
cases = [[1.0, 3.0]]

[experiments.l2]
kind = "l2const"
sqfn = "vertical"
M = 1
identity_constant = 2.0

[experiments.rev]
kind = "reverse"
M = 1
p = [2.0]

[experiments.wit]
kind = "witness"
sqfn = "vertical"
M = 1
p = [3.0]
eps = [0.8, 0.4, 0.2, 0.1]

[experiments.kc]
kind = "schur"
family = "h3"
ni = 4
nj = 3
integrals = ["KC3"]
p = [2.0, 4.0]
"#;

fn small_engine(m: &ModelManifold) -> SqfnEngine<'_> {
    SqfnEngine::new(m, SpectralGrid::for_model(m, 16).unwrap()).unwrap()
}

fn small_model() -> ModelManifold {
    build_model(&[EndProfile::new(3, 1e5, 24), EndProfile::new(4, 1e5, 24)]).unwrap()
}

#[test]
fn empty_suite_passes_with_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SuiteConfig::parse("").unwrap();
    let out = run_config(&cfg, &config_hash(""), dir.path()).unwrap();
    assert!(out.pass);
    assert!(out.experiments.is_empty());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["experiments"].as_array().unwrap().len(), 0);
    assert_eq!(manifest["pass"], true);
}

#[test]
fn vertical_witness_with_large_order_is_rejected_before_solving() {
    let text = format!("{SMALL_MODEL}\n[experiments.w]\nkind = \"witness\"\nsqfn = \"vertical\"\nM = 2\np = [3.0]\n");
    assert!(SuiteConfig::parse(&text).is_err());

    // validation also guards run_config, so nothing is written
    let mut cfg = SuiteConfig::parse(SMALL_MODEL).unwrap();
    let bad = SuiteConfig::parse(&text.replace("M = 2", "M = 1")).unwrap();
    let mut spec = bad.experiments["w"].clone();
    if let ExperimentSpec::Witness { order, .. } = &mut spec {
        *order = 2;
    }
    cfg.experiments.insert("w".into(), spec);
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config(&cfg, "h", dir.path()).is_err());
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn config_errors() {
    let with = |extra: &str| SuiteConfig::parse(&format!("{SMALL_MODEL}\n{extra}"));
    assert!(with("[experiments.w]\nkind = \"witness\"\nsqfn = \"horizontal\"\nM = 1\np = [3.0]\n").is_err());
    assert!(with("[experiments.w]\nkind = \"witness\"\nsqfn = \"vertical\"\nM = 1\np = [3.0]\neps = [0.4, 0.2, 0.1]\n").is_err());
    assert!(with("[experiments.w]\nkind = \"witness\"\nsqfn = \"vertical\"\nM = 1\np = [3.0]\neps = [0.4, 0.2, 0.2, 0.1]\n").is_err());
    assert!(with("[experiments.w]\nkind = \"witness\"\nsqfn = \"vertical\"\nM = 1\np = [1.0]\n").is_err());
    assert!(with("[experiments.s]\nkind = \"schur\"\nfamily = \"h3\"\nni = 3\nnj = 4\nintegrals = [\"KC9\"]\np = [2.0]\n").is_err());
    assert!(with("[experiments.b]\nkind = \"bessel\"\ncases = []\n").is_err());
    assert!(with("[experiments.b]\nkind = \"nope\"\n").is_err());
    assert!(SuiteConfig::parse("[experiments.l]\nkind = \"l2const\"\nsqfn = \"vertical\"\nM = 1\n").is_err());
    assert!(SuiteConfig::parse(&SMALL_MODEL.replace("ramp = [1.0, 2.0]", "ramp = [2.0, 1.0]")).is_err());
}

#[test]
fn reruns_are_byte_identical() {
    let text = format!("{SMALL_MODEL}\n{SMALL_SUITE}");
    let cfg = SuiteConfig::parse(&text).unwrap();
    let hash = config_hash(&text);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_config(&cfg, &hash, a.path()).unwrap();
    let rb = run_config(&cfg, &hash, b.path()).unwrap();
    assert_eq!(ra.experiments.len(), 5);
    assert_eq!(ra.pass, rb.pass);
    for e in &ra.experiments {
        let x = fs::read(a.path().join(&e.csv)).unwrap();
        let y = fs::read(b.path().join(&e.csv)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{}", e.csv);
        assert!(a.path().join(&e.svg).exists());
        let csv = String::from_utf8(x).unwrap();
        assert!(csv.lines().skip(1).all(|l| l.starts_with(&format!("{},{hash}", e.id))), "{}", e.id);
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ra.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], hash.as_str());
    assert_eq!(manifest["pass"], ra.pass);
}

#[test]
fn config_hash_is_sha256_hex() {
    assert_eq!(
        config_hash(""),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
}

#[test]
fn witness_sweep_records_are_consistent() {
    let m = small_model();
    let eng = small_engine(&m);
    let eps = [0.8, 0.4, 0.2, 0.1];
    let sw = witness_sweep(&eng, 1, 3.0, &eps, Kind::Vertical, Range::Low, (1.0, 2.0)).unwrap();
    assert_eq!(sw.end, 0);
    assert_eq!(sw.ratios.len(), eps.len());
    for i in 0..eps.len() {
        assert!((sw.ratios[i] - sw.output_norms[i] / sw.input_norms[i]).abs() <= 1e-12 * sw.ratios[i]);
        assert!(sw.input_norms[i] > 0.0 && sw.output_norms[i].is_finite());
    }
    assert!(sw.slope.is_finite() && sw.slope_stderr >= 0.0);
    assert!(witness_sweep(&eng, 1, 3.0, &[0.4, 0.2, 0.1], Kind::Vertical, Range::Low, (1.0, 2.0)).is_err());
    assert!(witness_sweep(&eng, 1, 3.0, &[0.1, 0.2, 0.3, 0.4], Kind::Vertical, Range::Low, (1.0, 2.0)).is_err());
    // 3 · 0.05 · ln(1e5) < 3 leaves too little of the tail inside the model
    assert!(witness_sweep(&eng, 1, 3.0, &[0.4, 0.2, 0.1, 0.05], Kind::Vertical, Range::Low, (1.0, 2.0)).is_err());
    assert!(witness_sweep(&eng, 2, 3.0, &eps, Kind::Vertical, Range::Low, (1.0, 2.0)).is_err());
}

#[test]
fn reverse_skips_the_zero_sample() {
    let m = small_model();
    let eng = small_engine(&m);
    let samples = sample_functions(&m, 2.0, (1.0, 2.0)).unwrap();
    assert!(samples.last().unwrap().values.iter().all(|&v| v == 0.0));
    let rep = reverse_check(&eng, 1, 2.0, &samples, Range::Full).unwrap();
    let zero = rep.samples.last().unwrap();
    assert!(zero.ratio.is_none() && zero.input_norm == 0.0);
    let finite: Vec<f64> = rep.samples.iter().filter_map(|s| s.ratio).collect();
    assert_eq!(finite.len(), samples.len() - 1);
    assert_eq!(rep.max_ratio, finite.iter().cloned().fold(0.0, f64::max));
    // only the zero function: nothing admissible
    assert!(reverse_check(&eng, 1, 2.0, &[m.zeros()], Range::Full).is_err());
}

#[test]
fn reverse_at_p2_is_sqrt_two() {
    let m = small_model();
    let eng = small_engine(&m);
    let samples = sample_functions(&m, 2.0, (1.0, 2.0)).unwrap();
    let rep = reverse_check(&eng, 1, 2.0, &samples, Range::Full).unwrap();
    for s in &rep.samples {
        if let Some(r) = s.ratio {
            assert!((r / 2f64.sqrt() - 1.0).abs() < 0.02, "{}: {r}", s.label);
        }
    }
}

#[test]
fn default_suite_config_is_valid() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default_suite.toml")).unwrap();
    let cfg = SuiteConfig::parse(&text).unwrap();
    assert!(cfg.experiments.len() >= 8);
}
