use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use sbra_cli::{
    apply_overrides, oracle_check, render_report, run_csv, run_single, sweep_csv, trace_csv,
    write_or_print, OracleCheckOptions, Overrides,
};
use sbra_core::parse_scenario;

#[derive(Parser)]
#[command(
    name = "sbra",
    about = "Slotted random-access network simulator with state-based probability control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Scenario file (.scn)
    scenario: PathBuf,
    /// Override the scenario's seed list with a single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of simulated slots (warmup becomes 10%)
    #[arg(long)]
    slots: Option<u64>,
    /// Write CSV results here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single (policy, rate, seed) point and report its metrics
    Run {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Also write a per-slot trace CSV to this path
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Simulate every (policy, rate, seed) combination and emit CSV
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,
    },
    /// Sweep restricted to a comma-separated list of policy names
    Compare {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Policy names, e.g. --policies linear-sbra,square-sbra
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
    },
    /// Verify the closed forms and heuristics against brute-force oracles
    OracleCheck {
        /// Random tuples for the closed-form agreement check
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Probability grid step (at most 1e-3)
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Random instances for the DP dominance check
        #[arg(long, default_value_t = 100)]
        dp_instances: usize,
        /// Random topologies for the max-weight cross-check
        #[arg(long, default_value_t = 50)]
        maxweight_cases: usize,
        /// Seed for the randomized checks
        #[arg(long, default_value_t = 20_100_815)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, trace } => {
            let mut config = parse_scenario(&common.scenario)?;
            apply_overrides(
                &mut config,
                &Overrides {
                    seed: common.seed,
                    slots: common.slots,
                },
            );
            let report = run_single(&config)?;
            print!("{}", render_report(&config, &report));
            if let Some(out) = &common.out {
                write_or_print(Some(out), &run_csv(&config, &report))?;
            }
            if let Some(trace_path) = &trace {
                write_or_print(Some(trace_path), &trace_csv(&config)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common } => {
            let mut config = parse_scenario(&common.scenario)?;
            apply_overrides(
                &mut config,
                &Overrides {
                    seed: common.seed,
                    slots: common.slots,
                },
            );
            let csv = sweep_csv(&config, None)?;
            write_or_print(common.out.as_deref(), &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { common, policies } => {
            let mut config = parse_scenario(&common.scenario)?;
            apply_overrides(
                &mut config,
                &Overrides {
                    seed: common.seed,
                    slots: common.slots,
                },
            );
            let csv = sweep_csv(&config, Some(&policies))?;
            write_or_print(common.out.as_deref(), &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck {
            count,
            step,
            dp_instances,
            maxweight_cases,
            seed,
        } => {
            let report = oracle_check(&OracleCheckOptions {
                count,
                step,
                dp_instances,
                maxweight_cases,
                seed,
            })?;
            print!("{}", report.render());
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
