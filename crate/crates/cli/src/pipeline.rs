//! The scenario pipeline: load data, assemble the network, calibrate, solve
//! both intervention problems, simulate every policy, and write artifacts.

use crate::config::{PolicyKind, ScenarioConfig};
use crate::policy::{make_policy, report_halving_time, PolicyContext};
use crate::report::{PolicyReport, QuarantineSection, Summary, TravelBudgetReport, TravelSection};
use epinet_core::dynamics::{
    initial_state, simulate_base, simulate_siqr, write_aggregate_csv, write_trajectory_csv,
    InitialConditionSpec, Trajectory,
};
use epinet_core::mobility::{build_travel_rates, calibrate_beta, load_tables, TablePaths};
use epinet_core::model::{tau_from_vec, validate_params};
use epinet_core::quarantine_opt::{PdgdOptions, PdgdState, QuarantineProblem, QuarantineSolution};
use epinet_core::spectral::reproduction_number;
use epinet_core::travel_opt::{budget_sweep, TravelSolution, TravelSolveOptions};
use epinet_core::{CompartmentState, EpidemicParams, NetworkSpec, QuarantineRates};
use std::io::Write as _;

/// Pipeline failures, split by exit code: configuration problems exit 2,
/// solver failures exit 3.
#[derive(Debug)]
pub enum PipelineError {
    Config(String),
    Solver(String),
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineError::Config(msg) => write!(f, "configuration error: {msg}"),
            PipelineError::Solver(msg) => write!(f, "solver error: {msg}"),
        }
    }
}

impl std::error::Error for PipelineError {}

fn cfg_err(stage: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(format!("stage {stage}: {e}"))
}

fn solver_err(stage: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Solver(format!("stage {stage}: {e}"))
}

/// Everything the scenario stages share once the inputs are resolved.
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub roster: Vec<String>,
    pub net: NetworkSpec,
    pub costs: epinet_core::EconomicCosts,
    pub state0: CompartmentState,
    pub params: EpidemicParams,
    pub calibrated: bool,
}

/// Load tables, build the network, construct the initial state, and resolve
/// the epidemic parameters (calibrating transmission when asked).
pub fn prepare(config: &ScenarioConfig, verbose: bool) -> Result<PreparedScenario, PipelineError> {
    config.validate().map_err(|e| cfg_err("config", e))?;
    let tables = load_tables(&TablePaths {
        flows: config.data.flows.clone(),
        population: config.data.population.clone(),
        gdp: config.data.gdp.clone(),
        cases: config.data.cases.clone(),
    })
    .map_err(|e| cfg_err("load", e))?;

    let n = tables.roster.len();
    let mut t_out = vec![config.t_out; n];
    for (name, value) in &config.t_out_overrides {
        let idx = tables
            .roster
            .iter()
            .position(|r| r == name)
            .ok_or_else(|| {
                PipelineError::Config(format!("t_out override names unknown node {name:?}"))
            })?;
        t_out[idx] = *value;
    }
    let tau = build_travel_rates(&tables.flows, &t_out).map_err(|e| cfg_err("travel-rates", e))?;
    let net = NetworkSpec::from_travel_rates(tables.populations.clone(), tau)
        .map_err(|e| cfg_err("network", e))?;

    let ic = config
        .initial_conditions
        .as_ref()
        .map(|c| InitialConditionSpec {
            reporting_rate: c.reporting_rate,
            recovered_ratio: c.recovered_ratio,
            symptomatic_fraction: c.symptomatic_fraction,
        })
        .unwrap_or_default();
    let state0 = initial_state(&tables.cases, net.populations(), &ic)
        .map_err(|e| cfg_err("initial-state", e))?;

    let pc = &config.params;
    let base = EpidemicParams {
        beta_a: 0.0,
        beta_s: 0.0,
        epsilon: pc.epsilon,
        r_a: pc.r_a,
        r_s: pc.r_s,
        r_q: pc.r_q,
        alpha: config.alpha,
    };
    let (params, calibrated) = match (pc.beta_s, pc.target_growth) {
        (Some(beta_s), _) => (
            EpidemicParams {
                beta_a: pc.eta * beta_s,
                beta_s,
                ..base
            },
            false,
        ),
        (None, Some(target)) => {
            let (beta_a, beta_s) = calibrate_beta(net.flow(), &state0.s, &base, pc.eta, target)
                .map_err(|e| solver_err("calibrate", e))?;
            if verbose {
                eprintln!("calibrated beta_s = {beta_s:.6} (target growth {target})");
            }
            (
                EpidemicParams {
                    beta_a,
                    beta_s,
                    ..base
                },
                true,
            )
        }
        (None, None) => unreachable!("validated"),
    };

    let report = validate_params(&params, &net);
    if !report.is_ok() {
        return Err(PipelineError::Config(format!("stage validate: {report}")));
    }
    Ok(PreparedScenario {
        config: config.clone(),
        roster: tables.roster,
        net,
        costs: tables.costs,
        state0,
        params,
        calibrated,
    })
}

impl PreparedScenario {
    pub fn quarantine_problem(&self) -> QuarantineProblem<'_> {
        QuarantineProblem {
            s0: &self.state0.s,
            flow: self.net.flow(),
            params: &self.params,
            alpha: self.config.alpha,
            costs: &self.costs,
        }
    }

    /// Solve the quarantine design by the requested method.
    pub fn solve_quarantine(
        &self,
        method: QuarantineMethod,
    ) -> Result<QuarantineSolution, PipelineError> {
        let problem = self.quarantine_problem();
        let balancing = problem
            .optimal_quarantine()
            .map_err(|e| solver_err("quarantine-opt", e))?;
        match method {
            QuarantineMethod::Balance => Ok(balancing),
            QuarantineMethod::Pdgd => {
                let opts = PdgdOptions {
                    step: 5e-3,
                    stop_tol: 1e-7,
                    max_steps: 20_000_000,
                    ..PdgdOptions::default()
                };
                let state = PdgdState::cold(problem.dim(), 1.0);
                let run = problem
                    .solve_pdgd(&state, &opts)
                    .map_err(|e| solver_err("quarantine-opt/pdgd", e))?;
                if !run.is_converged() {
                    return Err(PipelineError::Solver(
                        "stage quarantine-opt/pdgd: dynamics hit the step cap".into(),
                    ));
                }
                // Report the dynamic solution with the balancing run's
                // diagnostics carried alongside.
                let cost = problem
                    .cost(&run.rates)
                    .map_err(|e| solver_err("quarantine-opt/pdgd", e))?;
                let m = epinet_core::assemble_quarantine_matrix(
                    &self.state0.s,
                    self.net.flow(),
                    &self.params,
                    &run.rates,
                )
                .map_err(|e| solver_err("quarantine-opt/pdgd", e))?;
                let lambda_max = epinet_core::spectral::dominant_eigenpair(&m)
                    .map_err(|e| solver_err("quarantine-opt/pdgd", e))?
                    .lambda;
                Ok(QuarantineSolution {
                    rates: run.rates,
                    lambda_max,
                    cost,
                    v_star: balancing.v_star,
                    balance: balancing.balance,
                    feasibility: balancing.feasibility,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuarantineMethod {
    Balance,
    Pdgd,
}

/// Run the whole scenario and write artifacts into the output directory.
pub fn run_scenario(
    config: &ScenarioConfig,
    threads: usize,
    verbose: bool,
) -> Result<Summary, PipelineError> {
    let prepared = prepare(config, verbose)?;
    std::fs::create_dir_all(&config.output_dir).map_err(|e| cfg_err("output-dir", e))?;

    // Quarantine side: optimal design plus cost-matched baselines.
    let problem = prepared.quarantine_problem();
    let feasibility = problem.feasibility_check();
    let optimal = prepared.solve_quarantine(QuarantineMethod::Balance)?;
    let reference_cost = optimal.cost;
    if verbose {
        eprintln!(
            "optimal quarantine: lambda = {:.6}, cost = {:.4}",
            optimal.lambda_max, optimal.cost
        );
    }

    let ctx = PolicyContext {
        problem,
        optimal: &optimal.rates,
    };
    let mut policy_names = Vec::new();
    let mut policy_rates = Vec::new();
    for (idx, spec) in config.policies.iter().enumerate() {
        let mut spec = spec.clone();
        if spec.kind == PolicyKind::Random && spec.seed.is_none() {
            spec.seed = Some(config.seed.wrapping_add(idx as u64));
        }
        let rates =
            make_policy(&spec, reference_cost, &ctx).map_err(|e| solver_err("policies", e))?;
        let base_name = spec.kind.slug().to_string();
        let name = if policy_names.contains(&base_name) {
            format!("{base_name}-{idx}")
        } else {
            base_name
        };
        policy_names.push(name);
        policy_rates.push(rates);
    }

    // Simulate the policies (possibly concurrently) and write their CSVs.
    let trajectories = simulate_policies(&prepared, &policy_rates, threads)
        .map_err(|e| solver_err("simulate", e))?;
    let mut policy_reports = Vec::new();
    for ((name, rates), traj) in policy_names.iter().zip(&policy_rates).zip(&trajectories) {
        write_policy_csvs(&prepared, name, traj).map_err(|e| cfg_err("write", e))?;
        let m = epinet_core::assemble_quarantine_matrix(
            &prepared.state0.s,
            prepared.net.flow(),
            &prepared.params,
            rates,
        )
        .map_err(|e| solver_err("report", e))?;
        let lambda_max = epinet_core::spectral::dominant_eigenpair(&m)
            .map_err(|e| solver_err("report", e))?
            .lambda;
        let r0 = reproduction_number(
            &prepared.state0.s,
            prepared.net.flow(),
            &prepared.params,
            rates,
        )
        .map_err(|e| solver_err("report", e))?;
        let rows = epinet_core::dynamics::summarize(traj, prepared.net.populations());
        policy_reports.push(PolicyReport {
            name: name.clone(),
            cost: epinet_core::quarantine_opt::quarantine_cost(rates, &prepared.costs)
                .map_err(|e| solver_err("report", e))?,
            lambda_max,
            r0,
            halving_time_days: report_halving_time(traj, prepared.net.populations()),
            final_active: rows.last().map(|r| r.active).unwrap_or(0.0),
            final_cumulative: rows.last().map(|r| r.cumulative).unwrap_or(0.0),
            q_a: rates.q_a.clone(),
            q_s: rates.q_s.clone(),
        });
    }

    // Travel side: budget sweep, then simulate the base model under each
    // optimized travel matrix.
    let mut travel_reports = Vec::new();
    if !config.budgets.is_empty() {
        let template = TravelSolveOptions {
            max_iters: config.travel_max_iters,
            ..TravelSolveOptions::with_budget(0.0)
        };
        let sweep = budget_sweep(
            &prepared.net,
            &prepared.state0.s,
            &prepared.params,
            &config.budgets,
            &template,
        )
        .map_err(|e| solver_err("travel-opt", e))?;
        for (budget, solution) in &sweep {
            if verbose {
                eprintln!("budget {budget}: f* = {:+.6}", solution.f_star);
            }
            let traj = simulate_under_travel_rates(&prepared, solution)
                .map_err(|e| solver_err("travel-sim", e))?;
            let tag = format_budget(*budget);
            write_named_csvs(&prepared, &format!("travel_b{tag}"), &traj)
                .map_err(|e| cfg_err("write", e))?;
            travel_reports.push(TravelBudgetReport {
                budget: *budget,
                f_initial: solution.f_initial,
                f_star: solution.f_star,
                iterations: solution.trace.iterations,
                row_sum_exceeded: solution.row_sum_exceeded.clone(),
            });
        }
    }

    let summary = Summary {
        schema_version: 1,
        rng: crate::report::RngInfo {
            name: "chacha8".into(),
            seed: config.seed,
        },
        nodes: prepared.roster.clone(),
        alpha: config.alpha,
        params: prepared.params.clone(),
        calibrated: prepared.calibrated,
        target_growth: config.params.target_growth,
        feasibility,
        quarantine: QuarantineSection {
            reference_cost,
            balance_imbalance: optimal.balance.imbalance,
            balance_iterations: optimal.balance.iterations,
            policies: policy_reports,
        },
        travel: TravelSection {
            budgets: travel_reports,
        },
    };
    let summary_path = config.output_dir.join("summary.json");
    let file = std::fs::File::create(&summary_path).map_err(|e| cfg_err("write", e))?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &summary).map_err(|e| cfg_err("write", e))?;
    writer.write_all(b"\n").map_err(|e| cfg_err("write", e))?;
    Ok(summary)
}

fn simulate_policies(
    prepared: &PreparedScenario,
    policies: &[QuarantineRates],
    threads: usize,
) -> epinet_core::Result<Vec<Trajectory>> {
    let run = |rates: &QuarantineRates| {
        simulate_siqr(
            &prepared.state0,
            &prepared.net,
            &prepared.params,
            rates,
            prepared.config.horizon,
            prepared.config.dt,
        )
    };
    if threads <= 1 || policies.len() <= 1 {
        return policies.iter().map(run).collect();
    }
    let mut results: Vec<Option<epinet_core::Result<Trajectory>>> =
        (0..policies.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in policies
            .iter()
            .enumerate()
            .collect::<Vec<_>>()
            .chunks((policies.len() + threads - 1) / threads)
        {
            let chunk: Vec<(usize, &QuarantineRates)> = chunk.to_vec();
            handles.push(scope.spawn(move || {
                chunk
                    .into_iter()
                    .map(|(idx, rates)| (idx, run(rates)))
                    .collect::<Vec<_>>()
            }));
        }
        for handle in handles {
            for (idx, result) in handle.join().expect("simulation thread panicked") {
                results[idx] = Some(result);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every policy simulated"))
        .collect()
}

fn simulate_under_travel_rates(
    prepared: &PreparedScenario,
    solution: &TravelSolution,
) -> epinet_core::Result<Trajectory> {
    let n = prepared.net.len();
    let tau = tau_from_vec(&solution.tau_star, n)?;
    let net = NetworkSpec::from_travel_rates(prepared.net.populations().to_vec(), tau)?;
    simulate_base(
        &prepared.state0,
        &net,
        &prepared.params,
        prepared.config.horizon,
        prepared.config.dt,
    )
}

fn write_policy_csvs(
    prepared: &PreparedScenario,
    name: &str,
    traj: &Trajectory,
) -> std::io::Result<()> {
    write_named_csvs(prepared, &format!("quarantine_{name}"), traj)
}

fn write_named_csvs(
    prepared: &PreparedScenario,
    stem: &str,
    traj: &Trajectory,
) -> std::io::Result<()> {
    let dir = &prepared.config.output_dir;
    let every = prepared.config.output_every;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
    write_trajectory_csv(traj, &prepared.roster, every, &mut f)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}_agg.csv")))?);
    write_aggregate_csv(traj, prepared.net.populations(), every, &mut f)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}

fn format_budget(b: f64) -> String {
    if (b - b.round()).abs() < 1e-9 {
        format!("{}", b.round() as i64)
    } else {
        format!("{b}").replace('.', "p")
    }
}

/// Validate a scenario end to end without solving: config, tables, parameter
/// invariants, and quarantine feasibility.
pub fn validate_scenario(
    config: &ScenarioConfig,
    out: &mut dyn std::io::Write,
) -> Result<(), PipelineError> {
    let prepared = prepare(config, false)?;
    let problem = prepared.quarantine_problem();
    let feasibility = problem.feasibility_check();
    writeln!(out, "nodes: {}", prepared.roster.len()).ok();
    writeln!(
        out,
        "parameters: beta_a = {:.6}, beta_s = {:.6}, epsilon = {}, r_a = {}, r_s = {}, r_q = {}",
        prepared.params.beta_a,
        prepared.params.beta_s,
        prepared.params.epsilon,
        prepared.params.r_a,
        prepared.params.r_s,
        prepared.params.r_q
    )
    .ok();
    writeln!(out, "feasibility: {feasibility}").ok();
    if !feasibility.feasible {
        return Err(PipelineError::Solver(format!(
            "stage feasibility: quarantine problem infeasible at alpha = {}",
            config.alpha
        )));
    }
    writeln!(out, "scenario is valid").ok();
    Ok(())
}
