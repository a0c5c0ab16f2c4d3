use clap::{Args, Parser, Subcommand};
use epinet_cli::config::ScenarioConfig;
use epinet_cli::pipeline::{self, PipelineError, QuarantineMethod};
use epinet_cli::report::{write_json_pretty, QuarantineOptOutput, TravelOptOutput};
use epinet_core::travel_opt::{optimize_travel, TravelSolveOptions};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "epinet",
    about = "Networked epidemic simulation and optimal interventions",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalFlags {
    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    /// Worker threads for policy simulations.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full scenario: solve both problems, simulate every policy, and
    /// write CSVs plus summary.json.
    Run { scenario: PathBuf },
    /// Optimize travel rates for one budget and write the solution JSON.
    TravelOpt {
        scenario: PathBuf,
        #[arg(long)]
        budget: f64,
        #[arg(long, default_value = "solution.json")]
        out: PathBuf,
        /// Iteration cap of the projected gradient solve.
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Design quarantine rates and write the solution JSON.
    QuarantineOpt {
        scenario: PathBuf,
        /// Override the scenario's decay target.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_parser = parse_method, default_value = "balance")]
        method: QuarantineMethod,
        #[arg(long, default_value = "q.json")]
        out: PathBuf,
    },
    /// Check a scenario's configuration, data tables, and feasibility.
    Validate { scenario: PathBuf },
}

fn parse_method(s: &str) -> Result<QuarantineMethod, String> {
    match s {
        "balance" => Ok(QuarantineMethod::Balance),
        "pdgd" => Ok(QuarantineMethod::Pdgd),
        other => Err(format!("unknown method {other:?}; use balance or pdgd")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.downcast_ref::<PipelineError>() {
                Some(PipelineError::Config(_)) => ExitCode::from(EXIT_CONFIG),
                Some(PipelineError::Solver(_)) => ExitCode::from(EXIT_SOLVER),
                None => ExitCode::from(EXIT_CONFIG),
            }
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { scenario } => {
            let config = load_config(&scenario, &cli.global)?;
            pipeline::run_scenario(&config, cli.global.threads.max(1), cli.global.verbose)?;
            if cli.global.verbose {
                eprintln!("wrote artifacts to {}", config.output_dir.display());
            }
            Ok(())
        }
        Command::TravelOpt {
            scenario,
            budget,
            out,
            max_iters,
        } => {
            let config = load_config(&scenario, &cli.global)?;
            let prepared = pipeline::prepare(&config, cli.global.verbose)?;
            let opts = TravelSolveOptions {
                max_iters: max_iters.unwrap_or(config.travel_max_iters),
                ..TravelSolveOptions::with_budget(budget)
            };
            let solution =
                optimize_travel(&prepared.net, &prepared.state0.s, &prepared.params, &opts)
                    .map_err(|e| PipelineError::Solver(format!("stage travel-opt: {e}")))?;
            write_json_pretty(
                &out,
                &TravelOptOutput {
                    budget,
                    f_initial: solution.f_initial,
                    f_star: solution.f_star,
                    iterations: solution.trace.iterations,
                    tau_star: solution.tau_star.clone(),
                    row_sum_exceeded: solution.row_sum_exceeded.clone(),
                    trace: solution.trace,
                },
            )?;
            println!(
                "f* = {:+.6} (from {:+.6}) -> {}",
                solution.f_star,
                solution.f_initial,
                out.display()
            );
            Ok(())
        }
        Command::QuarantineOpt {
            scenario,
            alpha,
            method,
            out,
        } => {
            let mut config = load_config(&scenario, &cli.global)?;
            if let Some(alpha) = alpha {
                config.alpha = alpha;
            }
            let prepared = pipeline::prepare(&config, cli.global.verbose)?;
            let solution = prepared.solve_quarantine(method)?;
            write_json_pretty(
                &out,
                &QuarantineOptOutput {
                    alpha: config.alpha,
                    method: match method {
                        QuarantineMethod::Balance => "balance".into(),
                        QuarantineMethod::Pdgd => "pdgd".into(),
                    },
                    q_a: solution.rates.q_a.clone(),
                    q_s: solution.rates.q_s.clone(),
                    lambda_max: solution.lambda_max,
                    cost: solution.cost,
                    feasibility: solution.feasibility.clone(),
                    balance_imbalance: solution.balance.imbalance,
                    balance_iterations: solution.balance.iterations,
                },
            )?;
            println!(
                "lambda_max = {:.8}, cost = {:.6} -> {}",
                solution.lambda_max,
                solution.cost,
                out.display()
            );
            Ok(())
        }
        Command::Validate { scenario } => {
            let config = load_config(&scenario, &cli.global)?;
            let mut out = std::io::stdout().lock();
            pipeline::validate_scenario(&config, &mut out)?;
            Ok(())
        }
    }
}

fn load_config(path: &PathBuf, global: &GlobalFlags) -> anyhow::Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(path)
        .map_err(|e| PipelineError::Config(format!("stage config: {e}")))?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}
