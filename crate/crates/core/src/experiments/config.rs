//! Suite configuration (TOML).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::radial_model::EndProfile;
use crate::sqfn_engine::{Kind, Range, DEFAULT_POINTS_PER_DECADE_K};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub ends: Vec<EndProfile>,
    #[serde(default = "default_ramp")]
    pub ramp: [f64; 2],
}

fn default_ramp() -> [f64; 2] {
    [1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_ppd_k")]
    pub points_per_decade_k: usize,
}

fn default_ppd_k() -> usize {
    DEFAULT_POINTS_PER_DECADE_K
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points_per_decade_k: DEFAULT_POINTS_PER_DECADE_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeTarget {
    pub p: f64,
    pub slope: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioTarget {
    pub p: f64,
    pub ratio: f64,
    /// Relative tolerance.
    pub tol: f64,
}

fn default_low() -> Range {
    Range::Low
}

fn default_full() -> Range {
    Range::Full
}

fn default_eps() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}

fn default_l2_tol() -> f64 {
    0.02
}

fn default_r_outer() -> f64 {
    1e8
}

fn default_cutoff_tol() -> f64 {
    0.05
}

fn default_stability() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    H3,
    W1,
    W2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Witness {
        sqfn: Kind,
        #[serde(rename = "M")]
        order: u32,
        p: Vec<f64>,
        #[serde(default = "default_eps")]
        eps: Vec<f64>,
        #[serde(default = "default_low")]
        range: Range,
        #[serde(default)]
        targets: Vec<SlopeTarget>,
    },
    Reverse {
        #[serde(rename = "M")]
        order: u32,
        p: Vec<f64>,
        #[serde(default = "default_full")]
        range: Range,
        #[serde(default)]
        targets: Vec<RatioTarget>,
        /// Allowed relative change of the max ratio under doubled resolution.
        #[serde(default = "default_stability")]
        stability: f64,
    },
    L2const {
        sqfn: Kind,
        #[serde(rename = "M")]
        order: u32,
        #[serde(default = "default_l2_tol")]
        tol: f64,
        /// Constant of the resolution of the identity; checked when present.
        identity_constant: Option<f64>,
    },
    Schur {
        family: Family,
        #[serde(default = "default_combiner")]
        combiner: crate::schur_verifier::Combiner,
        ni: usize,
        nj: usize,
        #[serde(rename = "M", default = "one")]
        order: u32,
        integrals: Vec<String>,
        p: Vec<f64>,
        #[serde(default = "default_r_outer")]
        r_outer: f64,
        #[serde(default = "default_cutoff_tol")]
        cutoff_tol: f64,
    },
    Highenergy {
        #[serde(rename = "M")]
        orders: Vec<u32>,
        r: Vec<f64>,
        k: Vec<f64>,
    },
    Bessel {
        cases: Vec<[f64; 2]>,
    },
}

fn one() -> u32 {
    1
}

fn default_combiner() -> crate::schur_verifier::Combiner {
    crate::schur_verifier::Combiner::Product
}

impl ExperimentSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentSpec::Witness { .. } => "witness",
            ExperimentSpec::Reverse { .. } => "reverse",
            ExperimentSpec::L2const { .. } => "l2const",
            ExperimentSpec::Schur { .. } => "schur",
            ExperimentSpec::Highenergy { .. } => "highenergy",
            ExperimentSpec::Bessel { .. } => "bessel",
        }
    }

    fn needs_model(&self) -> bool {
        matches!(
            self,
            ExperimentSpec::Witness { .. } | ExperimentSpec::Reverse { .. } | ExperimentSpec::L2const { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub experiments: BTreeMap<String, ExperimentSpec>,
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without building or solving anything.
    pub fn validate(&self) -> Result<()> {
        let needs_model = self.experiments.values().any(ExperimentSpec::needs_model);
        let n_min = match &self.model {
            Some(m) => {
                if m.ends.is_empty() {
                    return Err(Error::Config("[model] needs at least one end".into()));
                }
                let [a, b] = m.ramp;
                if !(a > 0.0 && a < b) {
                    return Err(Error::Config(format!("ramp [{a}, {b}] must satisfy 0 < a < b")));
                }
                m.ends.iter().map(|e| e.n).min()
            }
            None if needs_model => {
                return Err(Error::Config("experiments on the model need a [model] section".into()))
            }
            None => None,
        };
        if self.grid.points_per_decade_k == 0 {
            return Err(Error::Config("grid.points_per_decade_k must be positive".into()));
        }
        for (name, exp) in &self.experiments {
            let bad = |msg: String| Err(Error::Config(format!("experiments.{name}: {msg}")));
            match exp {
                ExperimentSpec::Witness { sqfn, order, p, eps, .. } => {
                    let n_min = n_min.unwrap_or(0);
                    if *sqfn == Kind::Vertical && 2 * *order as usize >= n_min {
                        return bad(format!(
                            "vertical witness needs 2M < n_min (M = {order}, n_min = {n_min})"
                        ));
                    }
                    if *sqfn == Kind::Horizontal && *order < 2 {
                        return bad("horizontal square function needs M >= 2".into());
                    }
                    if *order == 0 {
                        return bad("M must be positive".into());
                    }
                    if eps.len() < 4 || eps.windows(2).any(|w| w[1] >= w[0]) {
                        return bad("eps must be strictly decreasing with at least 4 entries".into());
                    }
                    if p.is_empty() || p.iter().any(|&v| !(v > 1.0 && v <= 20.0)) {
                        return bad("p values must lie in (1, 20]".into());
                    }
                }
                ExperimentSpec::Reverse { order, p, .. } => {
                    if *order == 0 || p.is_empty() || p.iter().any(|&v| !(v > 1.0)) {
                        return bad("need M >= 1 and p > 1".into());
                    }
                }
                ExperimentSpec::L2const { sqfn, order, .. } => {
                    if *order == 0 || (*sqfn == Kind::Horizontal && *order < 2) {
                        return bad(format!("M = {order} not allowed for {sqfn:?}"));
                    }
                }
                ExperimentSpec::Schur { integrals, p, .. } => {
                    for id in integrals {
                        crate::schur_verifier::IntegralId::parse(id)?;
                    }
                    if p.is_empty() {
                        return bad("empty p grid".into());
                    }
                }
                ExperimentSpec::Highenergy { orders, r, k } => {
                    if orders.is_empty() || r.is_empty() || k.is_empty() {
                        return bad("M, r and k grids must be nonempty".into());
                    }
                }
                ExperimentSpec::Bessel { cases } => {
                    if cases.is_empty() {
                        return bad("no (a, d) cases".into());
                    }
                }
            }
        }
        Ok(())
    }
}
