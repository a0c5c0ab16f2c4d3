//! Scenario configuration: JSON schema, validation, and path resolution.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Paths to the four input tables, relative to the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataPaths {
    pub flows: PathBuf,
    pub population: PathBuf,
    pub gdp: PathBuf,
    pub cases: PathBuf,
}

/// Epidemic parameters as configured; transmission comes either from
/// explicit rates or from growth-rate calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::recovery")]
    pub r_a: f64,
    #[serde(default = "defaults::recovery")]
    pub r_s: f64,
    #[serde(default = "defaults::recovery")]
    pub r_q: f64,
    /// Explicit symptomatic transmission rate; set `target_growth` instead
    /// to calibrate it.
    #[serde(default)]
    pub beta_s: Option<f64>,
    /// Ratio beta_a / beta_s.
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    /// Calibrate beta_s so the linearized growth rate matches this value.
    #[serde(default)]
    pub target_growth: Option<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            epsilon: defaults::epsilon(),
            r_a: defaults::recovery(),
            r_s: defaults::recovery(),
            r_q: defaults::recovery(),
            beta_s: None,
            eta: defaults::eta(),
            target_growth: None,
        }
    }
}

/// One comparison policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Seed of the random policy's generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit per-node decay bound for the bounded-decline policy; cost
    /// matching picks it when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Optimal,
    Uniform,
    Random,
    BoundedDecline,
}

impl PolicyKind {
    pub fn slug(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Uniform => "uniform",
            PolicyKind::Random => "random",
            PolicyKind::BoundedDecline => "bounded-decline",
        }
    }
}

/// The full scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub data: DataPaths,
    /// Fraction of the day spent outside, applied to every node.
    #[serde(default = "defaults::t_out")]
    pub t_out: f64,
    /// Per-node overrides of `t_out`, keyed by node name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub t_out_overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub params: ParamsConfig,
    /// Required decay rate of the quarantine design.
    pub alpha: f64,
    /// l1 budgets of the travel sweep, ascending. Empty skips the sweep.
    #[serde(default)]
    pub budgets: Vec<f64>,
    /// Travel solve iteration cap.
    #[serde(default = "defaults::travel_max_iters")]
    pub travel_max_iters: usize,
    pub policies: Vec<PolicySpec>,
    /// Simulation horizon in days.
    pub horizon: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    /// Output sampling interval in days.
    #[serde(default = "defaults::output_every")]
    pub output_every: f64,
    /// Seed feeding every stochastic policy without its own seed.
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Initial-condition knobs; reporting-rate scaling applies to cases
    /// only, deaths enter unscaled.
    #[serde(default)]
    pub initial_conditions: Option<InitialConditionsConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialConditionsConfig {
    #[serde(default = "defaults::reporting_rate")]
    pub reporting_rate: f64,
    #[serde(default = "defaults::recovered_ratio")]
    pub recovered_ratio: f64,
    #[serde(default = "defaults::symptomatic_fraction")]
    pub symptomatic_fraction: f64,
}

mod defaults {
    pub fn epsilon() -> f64 {
        0.32
    }
    pub fn recovery() -> f64 {
        0.2
    }
    pub fn eta() -> f64 {
        0.6754
    }
    pub fn t_out() -> f64 {
        1.0 / 3.0
    }
    pub fn dt() -> f64 {
        0.05
    }
    pub fn output_every() -> f64 {
        1.0
    }
    pub fn seed() -> u64 {
        0
    }
    pub fn travel_max_iters() -> usize {
        150
    }
    pub fn reporting_rate() -> f64 {
        0.14
    }
    pub fn recovered_ratio() -> f64 {
        8878.0 / 215215.0
    }
    pub fn symptomatic_fraction() -> f64 {
        0.14
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(dir: &Path) -> String {
        for name in ["flows.csv", "population.csv", "gdp.csv", "cases.csv"] {
            std::fs::write(dir.join(name), "stub\n").unwrap();
        }
        format!(
            r#"{{
  "data": {{"flows": "flows.csv", "population": "population.csv",
            "gdp": "gdp.csv", "cases": "cases.csv"}},
  "params": {{"target_growth": 0.5}},
  "alpha": 0.02,
  "policies": [{{"kind": "optimal"}}],
  "horizon": 30.0,
  "output_dir": "{}"
}}"#,
            dir.join("out").display()
        )
    }

    #[test]
    fn defaults_fill_in_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let config = ScenarioConfig::load(&path).unwrap();
        assert_eq!(config.dt, 0.05);
        assert_eq!(config.t_out, 1.0 / 3.0);
        assert_eq!(config.params.eta, 0.6754);
        assert!(config.data.flows.is_absolute() || config.data.flows.starts_with(dir.path()));
        config.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let base = ScenarioConfig::load(&path).unwrap();

        let mut config = base.clone();
        config.policies.clear();
        assert!(config
            .validate()
            .unwrap_err()
            .to_string()
            .contains("policy list is empty"));

        let mut config = base.clone();
        config.budgets = vec![5.0, 1.0];
        assert!(config
            .validate()
            .unwrap_err()
            .to_string()
            .contains("sorted ascending"));

        let mut config = base.clone();
        config.params.target_growth = None;
        assert!(config
            .validate()
            .unwrap_err()
            .to_string()
            .contains("beta_s or target_growth"));

        let mut config = base.clone();
        config.policies = vec![PolicySpec {
            kind: PolicyKind::Random,
            seed: None,
            decay_bound: None,
        }];
        assert!(config
            .validate()
            .unwrap_err()
            .to_string()
            .contains("requires a seed"));

        let mut config = base;
        config.horizon = 0.0;
        assert!(config.validate().is_err());
    }
}

impl ScenarioConfig {
    /// Parse a scenario file and resolve its data paths against the file's
    /// directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let mut config: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        // Data paths resolve against the scenario file; the output directory
        // stays relative to the working directory.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [
            &mut config.data.flows,
            &mut config.data.population,
            &mut config.data.gdp,
            &mut config.data.cases,
        ] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        Ok(config)
    }

    /// Structural checks that run before any compute.
    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, p) in [
            ("flows", &self.data.flows),
            ("population", &self.data.population),
            ("gdp", &self.data.gdp),
            ("cases", &self.data.cases),
        ] {
            if !p.is_file() {
                anyhow::bail!("{name} file does not exist: {}", p.display());
            }
        }
        if self.policies.is_empty() {
            anyhow::bail!("policy list is empty");
        }
        if !(self.horizon > 0.0) {
            anyhow::bail!("horizon must be positive, got {}", self.horizon);
        }
        if !(self.dt > 0.0) {
            anyhow::bail!("dt must be positive, got {}", self.dt);
        }
        if !(self.output_every > 0.0) {
            anyhow::bail!("output_every must be positive, got {}", self.output_every);
        }
        if self.alpha < 0.0 {
            anyhow::bail!("alpha must be nonnegative, got {}", self.alpha);
        }
        if !(self.t_out > 0.0 && self.t_out <= 1.0) {
            anyhow::bail!("t_out must lie in (0, 1], got {}", self.t_out);
        }
        if self.budgets.windows(2).any(|w| w[0] > w[1]) {
            anyhow::bail!("budgets must be sorted ascending");
        }
        if self.budgets.iter().any(|&b| b < 0.0) {
            anyhow::bail!("budgets must be nonnegative");
        }
        if self.params.beta_s.is_none() && self.params.target_growth.is_none() {
            anyhow::bail!("params must set either beta_s or target_growth");
        }
        for (idx, policy) in self.policies.iter().enumerate() {
            if policy.kind == PolicyKind::Random && policy.seed.is_none() {
                anyhow::bail!("policy {idx}: random policy requires a seed");
            }
        }
        Ok(())
    }
}
