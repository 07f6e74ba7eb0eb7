use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impsim::chain::ChainLimits;
use impsim::sim::{
    load_scenario, parse_limits, replay_trace, run_campaign, run_chain, run_scenario, ChainOptions, ScenarioConfig,
};
use impsim::trace::emit_trace;
use impsim::Trace;
use serde::Serialize;

const MAX_CHAIN_ENV: &str = "SIMCTL_MAX_CHAIN";

#[derive(Parser)]
#[command(name = "simctl", version, about = "Synchronous message-passing simulator under impersonation attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and check its properties.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the delivery trace as JSONL.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run seeds seed-base..seed-base+runs and aggregate.
    Montecarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
    },
    /// Build the similarity chain between the all-0 and all-1 failure-free graphs.
    Chain {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rounds: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        force: bool,
    },
    /// Re-run a scenario against the forgeries recorded in a trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Violation(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    load_scenario(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn code(c: i32) -> u8 {
    c as u8
}

fn cmd_run(path: &Path, trace: Option<&Path>) -> Result<u8, Failure> {
    let scn = scenario(path)?;
    let mut report = run_scenario(&scn).map_err(Failure::usage)?;
    if let Some(out) = trace {
        emit_trace(&report.trace, out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
        report.trace_path = Some(out.display().to_string());
    }
    print_json(&report);
    Ok(code(report.exit_code()))
}

fn cmd_montecarlo(path: &Path, runs: u64, seed_base: u64) -> Result<u8, Failure> {
    let scn = scenario(path)?;
    let report = run_campaign(&scn, runs, seed_base).map_err(Failure::usage)?;
    print_json(&report);
    Ok(code(report.exit_code()))
}

fn chain_limits() -> Result<ChainLimits, Failure> {
    match std::env::var(MAX_CHAIN_ENV) {
        Ok(text) => parse_limits(&text).map_err(Failure::usage),
        Err(_) => Ok(ChainLimits::default()),
    }
}

fn cmd_chain(n: usize, rounds: u32, out: PathBuf, verify: bool, force: bool) -> Result<u8, Failure> {
    let opts = ChainOptions { n, rounds, out, verify, force, limits: chain_limits()? };
    match run_chain(&opts) {
        Ok(summary) => {
            print_json(&summary);
            Ok(code(summary.exit_code()))
        }
        Err(e) if e.exit_code() == 1 => Err(Failure::Violation(e.to_string())),
        Err(e) => Err(Failure::usage(e)),
    }
}

fn cmd_replay(trace: &Path, path: &Path) -> Result<u8, Failure> {
    let scn = scenario(path)?;
    let recorded = Trace::read_from(trace).map_err(|e| Failure::Usage(format!("{}: {e}", trace.display())))?;
    let report = replay_trace(&scn, &recorded).map_err(Failure::usage)?;
    print_json(&report);
    Ok(if report.matches() { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { scenario, trace } => cmd_run(&scenario, trace.as_deref()),
        Command::Montecarlo { scenario, runs, seed_base } => cmd_montecarlo(&scenario, runs, seed_base),
        Command::Chain { n, rounds, out, verify, force } => cmd_chain(n, rounds, out, verify, force),
        Command::Replay { trace, scenario } => cmd_replay(&trace, &scenario),
    };
    match result {
        Ok(c) => ExitCode::from(c),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(1)
        }
    }
}
