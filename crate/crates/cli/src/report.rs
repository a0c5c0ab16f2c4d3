//! Serializable run artifacts: the summary schema and the solver output
//! files written by the standalone subcommands.

use epinet_core::quarantine_opt::FeasibilityReport;
use epinet_core::{EpidemicParams, SolveTrace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngInfo {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyReport {
    pub name: String,
    pub cost: f64,
    pub lambda_max: f64,
    pub r0: f64,
    pub halving_time_days: Option<f64>,
    pub final_active: f64,
    pub final_cumulative: f64,
    pub q_a: Vec<f64>,
    pub q_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuarantineSection {
    pub reference_cost: f64,
    pub balance_imbalance: f64,
    pub balance_iterations: usize,
    pub policies: Vec<PolicyReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravelBudgetReport {
    pub budget: f64,
    pub f_initial: f64,
    pub f_star: f64,
    pub iterations: usize,
    pub row_sum_exceeded: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravelSection {
    pub budgets: Vec<TravelBudgetReport>,
}

/// The summary.json schema. Field order is the serialization order, which
/// together with the seeded generators keeps runs byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub rng: RngInfo,
    pub nodes: Vec<String>,
    pub alpha: f64,
    pub params: EpidemicParams,
    pub calibrated: bool,
    pub target_growth: Option<f64>,
    pub feasibility: FeasibilityReport,
    pub quarantine: QuarantineSection,
    pub travel: TravelSection,
}

/// Output of `epinet travel-opt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravelOptOutput {
    pub budget: f64,
    pub f_initial: f64,
    pub f_star: f64,
    pub iterations: usize,
    pub tau_star: Vec<f64>,
    pub row_sum_exceeded: Vec<usize>,
    pub trace: SolveTrace,
}

/// Output of `epinet quarantine-opt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuarantineOptOutput {
    pub alpha: f64,
    pub method: String,
    pub q_a: Vec<f64>,
    pub q_s: Vec<f64>,
    pub lambda_max: f64,
    pub cost: f64,
    pub feasibility: FeasibilityReport,
    pub balance_imbalance: f64,
    pub balance_iterations: usize,
}

pub fn write_json_pretty<T: Serialize>(path: &std::path::Path, value: &T) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    use std::io::Write as _;
    writer.write_all(b"\n")?;
    Ok(())
}
