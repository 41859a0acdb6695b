//! Experiment configuration: one flat knob bag, filled from defaults, then
//! an optional TOML/JSON file, then command-line overrides.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// verify-gf | verify-thm1 | verify-main | prop1 | prop2 | density |
    /// seq-lemma | fock-props | catalog
    pub suite: String,
    /// Catalog name or a JSON file of a polynomial connection.
    pub connection: String,
    pub beta: f64,
    pub conn_seed: u64,
    /// Path preset (`zero`, `unit`, `acceptance`) or a JSON file of
    /// `[k, mu, c]` triples.
    pub path: String,
    /// Chaos preset (`diagonal`, `random`) or a JSON file.
    pub chaos: String,
    pub chaos_seed: u64,
    pub j_max: usize,
    pub chaos_levels: usize,
    /// Test-vector preset (`random`) or a JSON file of `[j, mu, re, im]`.
    pub xi: String,
    pub xi_seed: u64,
    pub order: f64,
    pub n_max: usize,
    pub steps: usize,
    pub seeds: usize,
    pub eps: f64,
    /// Suite-specific verdict tolerance; each suite documents its default.
    pub tol: Option<f64>,
    pub mc_samples: usize,
    pub instances: usize,
    pub dims: usize,
    pub family: String,
    /// Density test function: `one`, `half`, `third`.
    pub test_fn: String,
    pub n_list: Vec<usize>,
    pub s_list: Vec<f64>,
    /// Sequence for the lemma check: `ones`, `alt-harmonic`, `inv-square`.
    pub sequence: String,
    /// Kernel grid resolution for prop2.
    pub grid: usize,
    /// prop2 case: `constant-diag`, `linear-diag`, `volterra-smooth`,
    /// `transport`.
    pub case: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: String::new(),
            connection: "quadratic-abelian".into(),
            beta: 1.0,
            conn_seed: 0,
            path: "acceptance".into(),
            chaos: "diagonal".into(),
            chaos_seed: 0,
            j_max: 16,
            chaos_levels: 4,
            xi: "random".into(),
            xi_seed: 7,
            order: 1.0,
            n_max: 200,
            steps: 2048,
            seeds: 64,
            eps: 1e-2,
            tol: None,
            mc_samples: 100_000,
            instances: 100,
            dims: 2,
            family: "sine".into(),
            test_fn: "half".into(),
            n_list: vec![16, 64, 256],
            s_list: vec![0.5, 1.0, 2.0],
            sequence: "alt-harmonic".into(),
            grid: 128,
            case: "linear-diag".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let suites = [
            "verify-gf",
            "verify-thm1",
            "verify-main",
            "prop1",
            "prop2",
            "density",
            "seq-lemma",
            "fock-props",
            "catalog",
        ];
        if !suites.contains(&self.suite.as_str()) {
            return Err(CliError::Config(format!("suite: unknown suite `{}`", self.suite)));
        }
        if self.steps < 16 {
            return Err(CliError::Config(format!("steps: need ≥ 16, got {}", self.steps)));
        }
        if self.n_max < 8 {
            return Err(CliError::Config(format!("n_max: need ≥ 8, got {}", self.n_max)));
        }
        if self.eps <= 0.0 {
            return Err(CliError::Config(format!("eps: must be positive, got {}", self.eps)));
        }
        if self.dims == 0 {
            return Err(CliError::Config("dims: must be ≥ 1".into()));
        }
        if self.suite == "verify-thm1" && !self.steps.is_power_of_two() {
            return Err(CliError::Config(format!(
                "steps: verify-thm1 needs a power of two, got {}",
                self.steps
            )));
        }
        Ok(())
    }

    /// The documented defaults, as TOML, for `--explain`.
    pub fn explain() -> String {
        let mut d = ExperimentConfig::default();
        d.suite = "verify-gf".into();
        toml::to_string_pretty(&d).expect("defaults serialize")
    }
}
