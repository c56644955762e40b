//! Declarative experiment configuration in TOML.
//!
//! ```toml
//! kind = "exitlaw"            # analyze | exitlaw | transitions | meta | shorttime | gauss
//! seed = 7
//! n_paths = 2000
//! eps = [0.1, 0.05]
//! well = 1                    # 1-based start well
//!
//! [potential]
//! coefficients = [0.0, 0.0, -0.5, 0.0, 0.25]
//!
//! [levy]
//! r = 1.0
//! c_plus = 1.0
//! c_minus = 1.0
//! sv = "none"                 # or "logpow(p)"
//! inner = "stable"            # or "truncated"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{InnerProfile, LevyModel, SlowlyVarying, TailSpec};
use crate::potential::{analyze_auto, Landscape, PolynomialPotential};
use crate::simulate::{parameter_violations, Mode, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Analyze,
    ExitLaw,
    Transitions,
    Meta,
    ShortTime,
    Gauss,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Analyze => "analyze",
            ExperimentKind::ExitLaw => "exitlaw",
            ExperimentKind::Transitions => "transitions",
            ExperimentKind::Meta => "meta",
            ExperimentKind::ShortTime => "shorttime",
            ExperimentKind::Gauss => "gauss",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// `a_0, a_1, …, a_d` of `U(x) = Σ a_k x^k`.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub mu: f64,
    pub r: f64,
    #[serde(default = "one")]
    pub c_plus: f64,
    #[serde(default = "one")]
    pub c_minus: f64,
    #[serde(default = "default_sv")]
    pub sv: String,
    #[serde(default = "default_inner")]
    pub inner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    pub eps: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub margin_exponent: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Ball radius `Δ`; `Δ_0/4` when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Horizon as a multiple of `1/λ^i(ε)`.
    #[serde(default = "default_horizon_factor")]
    pub horizon_factor: f64,
    #[serde(default = "default_overflow")]
    pub overflow: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// 1-based start well.
    #[serde(default = "one_usize")]
    pub well: usize,
    /// Snapshot times on the `t/H(1/ε)` scale.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// `t` of the short-time snapshot at `t/ε^δ`.
    #[serde(default = "one")]
    pub short_time: f64,
    /// `δ` of the short-time snapshot at `t/ε^δ`.
    #[serde(default = "default_time_exponent")]
    pub time_exponent: f64,
    pub potential: PotentialSection,
    pub levy: LevySection,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_sv() -> String {
    "none".into()
}
fn default_inner() -> String {
    "stable".into()
}
fn default_paths() -> u64 {
    1000
}
fn default_rho() -> f64 {
    0.7
}
fn default_gamma() -> f64 {
    0.05
}
fn default_h() -> f64 {
    1e-3
}
fn default_horizon_factor() -> f64 {
    50.0
}
fn default_overflow() -> f64 {
    crate::potential::OVERFLOW_BOUND
}
fn default_mode() -> Mode {
    Mode::Decomposed
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_times() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_time_exponent() -> f64 {
    0.5
}

/// Parses `"none"` or `"logpow(p)"`.
pub fn parse_slowly_varying(s: &str) -> Result<SlowlyVarying> {
    let t = s.trim();
    if t == "none" || t == "constant" {
        return Ok(SlowlyVarying::Constant);
    }
    t.strip_prefix("logpow(")
        .and_then(|r| r.strip_suffix(')'))
        .and_then(|p| p.trim().parse().ok())
        .map(SlowlyVarying::LogPower)
        .ok_or_else(|| Error::Config(vec![format!("sv must be \"none\" or \"logpow(p)\", got {s:?}")]))
}

impl LevySection {
    pub fn model(&self) -> Result<LevyModel> {
        let sv = parse_slowly_varying(&self.sv)?;
        let tails = TailSpec::new(self.r, self.c_plus, self.c_minus, sv)?;
        let inner = match self.inner.trim() {
            "stable" => InnerProfile::Stable { alpha: self.r },
            "truncated" => InnerProfile::TruncatedEmpty,
            other => {
                return Err(Error::Config(vec![format!("inner must be \"stable\" or \"truncated\", got {other:?}")]))
            }
        };
        LevyModel::new(self.d, self.mu, tails, inner)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn potential(&self) -> Result<PolynomialPotential> {
        PolynomialPotential::new(self.potential.coefficients.clone())
    }

    pub fn landscape(&self) -> Result<(PolynomialPotential, Landscape)> {
        let p = self.potential()?;
        let l = analyze_auto(&p)?;
        Ok((p, l))
    }

    pub fn model(&self) -> Result<LevyModel> {
        self.levy.model()
    }

    /// Ball radius in use: the configured one or `Δ_0/4`.
    pub fn delta_for(&self, landscape: &Landscape) -> f64 {
        self.delta.unwrap_or(0.25 * landscape.delta0())
    }

    /// Simulation settings for one `ε` of the sweep, with the given horizon.
    pub fn sim_config(&self, eps: f64, landscape: &Landscape, horizon: f64) -> SimConfig {
        SimConfig {
            eps,
            rho: self.rho,
            gamma: self.gamma,
            margin_exponent: self.margin_exponent,
            h: self.h,
            horizon,
            overflow: self.overflow,
            delta: self.delta_for(landscape),
            seed: self.seed,
            mode: self.mode,
        }
    }

    /// Every violated constraint; empty when the configuration is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_paths < 1 {
            v.push("n_paths>=1".into());
        }
        if self.eps.is_empty() {
            v.push("eps list must be nonempty".into());
        }
        for &e in &self.eps {
            if !(e > 0.0 && e < 1.0) {
                v.push(format!("0<ε<1 (got {e})"));
            }
        }
        if !(self.horizon_factor > 0.0) {
            v.push("horizon_factor>0".into());
        }
        if self.times.iter().any(|t| !(*t >= 0.0)) || self.times.windows(2).any(|w| w[0] > w[1]) {
            v.push("times must be nonnegative and increasing".into());
        }
        let model = match self.model() {
            Ok(m) => Some(m),
            Err(e) => {
                v.push(e.to_string());
                None
            }
        };
        if self.kind != ExperimentKind::Gauss {
            v.extend(parameter_violations(self.rho, self.gamma, self.levy.r));
        }
        match self.landscape() {
            Ok((_, l)) => {
                if self.well < 1 || self.well > l.n_wells() {
                    v.push(format!("well must lie in 1..={} (got {})", l.n_wells(), self.well));
                }
                if let Some(m) = &model {
                    for &e in self.eps.iter().filter(|e| **e > 0.0 && **e < 1.0) {
                        let cfg = self.sim_config(e, &l, 1.0);
                        for msg in cfg.violations(&l, m) {
                            // parameter constraints were reported above
                            if !v.contains(&msg) && (self.kind != ExperimentKind::Gauss || !is_parameter(&msg)) {
                                v.push(format!("ε={e}: {msg}"));
                            }
                        }
                    }
                }
            }
            Err(e) => v.push(e.to_string()),
        }
        if self.kind == ExperimentKind::ShortTime && !(self.time_exponent > 0.0 && self.time_exponent < self.levy.r) {
            v.push(format!("0<δ<r (δ={}, r={})", self.time_exponent, self.levy.r));
        }
        if self.kind == ExperimentKind::Gauss && !(self.levy.d > 0.0) {
            v.push("gauss needs a Gaussian part d>0".into());
        }
        v
    }
}

fn is_parameter(msg: &str) -> bool {
    ["1/2<ρ<1", "γ<(1−ρ)/4", "2γ<ρ<1−2γ", "r(2ρ−1)+γ>0"].iter().any(|k| msg.contains(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
kind = "exitlaw"
seed = 3
n_paths = 10
eps = [0.05]

[potential]
coefficients = [0.0, 0.0, -0.5, 0.0, 0.25]

[levy]
r = 1.0
"#;

    fn with(extra: &str) -> ExperimentConfig {
        let mut text = String::from(extra);
        text.push_str(BASE);
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn defaults_and_validation() {
        let c = with("");
        assert_eq!(c.rho, 0.7);
        assert_eq!(c.gamma, 0.05);
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        let (_, l) = c.landscape().unwrap();
        assert!((c.delta_for(&l) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn named_violations() {
        let v = with("rho = 0.4\n").validate();
        assert!(v.iter().any(|s| s.contains("1/2<ρ")));
        let v = with("gamma = 0.2\n").validate();
        assert!(v.iter().any(|s| s.contains("γ<(1−ρ)/4")));
        let mut c = with("");
        c.n_paths = 0;
        assert!(c.validate().iter().any(|s| s.contains("n_paths")));
        let v = with("delta = 1.5\n").validate();
        assert!(v.iter().any(|s| s.contains("Δ_0")));
    }

    #[test]
    fn levy_strings() {
        assert_eq!(parse_slowly_varying("none").unwrap(), SlowlyVarying::Constant);
        assert_eq!(parse_slowly_varying("logpow(1.5)").unwrap(), SlowlyVarying::LogPower(1.5));
        assert!(parse_slowly_varying("log").is_err());
        let mut c = with("");
        c.levy.inner = "gaussian".into();
        assert!(c.model().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{BASE}")).is_err());
    }
}
