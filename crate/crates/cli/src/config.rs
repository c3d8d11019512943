//! Experiment configuration files.
//!
//! A config is a TOML document: top-level keys plus one section per
//! component. Field descriptors are tables tagged by `kind`.

use std::fmt;
use std::path::Path;

use lpq_core::fields::{DiffusionSpec, DriftField, ScalarField};
use lpq_core::mixed_norm::{MixedExponents, SpaceTimeGrid};
use lpq_core::occupation::SemimartingaleWeights;
use lpq_core::sde_solver::SolverConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Norm,
    Simulate,
    Occupation,
    Green,
    Nonexistence,
    Tightness,
    Converge,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Norm => "norm",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Occupation => "occupation",
            ExperimentKind::Green => "green",
            ExperimentKind::Nonexistence => "nonexistence",
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::Converge => "converge",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must match the experiment named on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<MixedExponents>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<DiffusionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<ScalarField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SpaceTimeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<SemimartingaleWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupation: Option<OccupationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness: Option<TightnessSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeSection>,
}

/// Solver settings; the seed lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub t0: f64,
    pub x0: Vec<f64>,
    #[serde(default = "one")]
    pub brownian_substeps: usize,
    #[serde(default)]
    pub left_limit_drift: bool,
}

fn one() -> usize {
    1
}

impl SolverSection {
    pub fn to_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            horizon: self.horizon,
            n_steps: self.n_steps,
            n_paths: self.n_paths,
            master_seed: seed,
            t0: self.t0,
            x0: self.x0.clone(),
            brownian_substeps: self.brownian_substeps,
            left_limit_drift: self.left_limit_drift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Summary rows at every `report_every`-th node.
    #[serde(default = "ten")]
    pub report_every: usize,
    /// Also write every path to `paths.csv`.
    #[serde(default)]
    pub dump_paths: bool,
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationSection {
    /// Horizon of the plain occupation integral; defaults to the solver's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub levels: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "origin_radius")]
    pub origin_radius: f64,
    #[serde(default = "floors")]
    pub floors: [f64; 2],
    /// Also run the repelling control.
    #[serde(default)]
    pub control: bool,
}

fn origin_radius() -> f64 {
    lpq_core::nonexistence::ORIGIN_RADIUS
}

fn floors() -> [f64; 2] {
    lpq_core::nonexistence::DEFAULT_FLOORS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightnessSection {
    pub orders: Vec<u32>,
    pub pairs: Vec<[f64; 2]>,
    /// Node count of the tabulated time change.
    #[serde(default = "hundred")]
    pub time_nodes: usize,
}

fn hundred() -> usize {
    100
}

/// A coefficient sequence built from the configured drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sequence {
    /// `b · 1{|b| ≤ M_n}`.
    Truncation { levels: Vec<f64> },
    /// `b ∗ ζ_{ε_n}`.
    Mollification { scales: Vec<f64> },
    /// `b` itself, repeated.
    Identity { length: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub sequence: Sequence,
    pub times: Vec<f64>,
    pub noise_seed: u64,
}

/// A configuration problem, reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are serializable")
    }

    /// SHA-256 of the canonical serialization, so formatting and comments do
    /// not change it.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn require<'a, T>(value: &'a Option<T>, section: &str) -> Result<&'a T, ConfigError> {
        value
            .as_ref()
            .ok_or_else(|| ConfigError(format!("missing section or key `{section}`")))
    }

    pub fn solver_config(&self, seed: u64) -> Result<SolverConfig, ConfigError> {
        let cfg = Self::require(&self.solver, "solver")?.to_config(seed);
        cfg.validate().map_err(|e| ConfigError(format!("[solver]: {e}")))?;
        Ok(cfg)
    }

    pub fn sigma_or_identity(&self) -> DiffusionSpec {
        self.sigma.clone().unwrap_or_else(DiffusionSpec::identity)
    }

    pub fn drift_or_zero(&self) -> DriftField {
        self.drift.clone().unwrap_or(DriftField::Zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment = "norm"
seed = 7

[exponents]
p = 3.0
q = inf
d = 2

[drift]
kind = "truncated"
level = 10.0

[drift.base]
kind = "singular"
alpha = 0.5
beta = 0.5
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.exponents.unwrap().q, f64::INFINITY);
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = ExperimentConfig::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.0.contains("bogus"), "{err}");
        let err = ExperimentConfig::parse("[exponents]\np = \"x\"\nq = 2.0\nd = 2\n").unwrap_err();
        assert!(err.0.contains("line"), "{err}");
    }

    #[test]
    fn missing_file() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/missing.cfg")).unwrap_err();
        assert!(err.0.contains("missing.cfg"));
    }
}
