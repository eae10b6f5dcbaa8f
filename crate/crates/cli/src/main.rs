//! `essr` command-line tool.
//!
//! Exit status: 0 success, 1 the analysis found a violation (shed needed,
//! invalid case), 2 usage or input error, 3 solver failure or limit.

mod args;
mod config;
mod run;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use essr_core::EssrError;

use args::{CaseCmd, Cli, ExportCmd, FeasCmd, Group, RegionCmd, ScenCmd, WorstCmd};
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Other(String),
}

impl From<EssrError> for CliError {
    fn from(e: EssrError) -> Self {
        match e {
            EssrError::Solver(_) | EssrError::SolverInput(_) => CliError::Solver(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => run::EXIT_SOLVER,
            CliError::Other(_) => 2,
        }
    }
}

fn dispatch(group: &Group) -> Result<(String, RunConfig, run::Outcome), CliError> {
    let (name, common) = match group {
        Group::Case(CaseCmd::Validate(c)) => ("case validate", c),
        Group::Scen(ScenCmd::Gen(c)) => ("scen gen", c),
        Group::Feas(FeasCmd::Check(a)) => ("feas check", &a.common),
        Group::Worst(WorstCmd::Solve(a)) => ("worst solve", &a.common),
        Group::Region(RegionCmd::Sweep(a)) => ("region sweep", &a.common),
        Group::Export(ExportCmd::Mps(c)) => ("export mps", c),
    };
    let mut cfg = RunConfig::resolve(common)?;
    if let Group::Region(RegionCmd::Sweep(a)) = group {
        if a.x.is_some() {
            cfg.x = a.x.clone();
        }
        if a.y.is_some() {
            cfg.y = a.y.clone();
        }
        if a.balance.is_some() {
            cfg.balance = a.balance;
        }
    }
    let outcome = match group {
        Group::Case(_) => run::case_validate(&cfg)?,
        Group::Scen(_) => run::scen_gen(&cfg)?,
        Group::Feas(FeasCmd::Check(a)) => run::feas_check(&cfg, a.scenario)?,
        Group::Worst(WorstCmd::Solve(a)) => run::worst_solve(&cfg, a.oracle, a.flows)?,
        Group::Region(_) => run::region_sweep(&cfg)?,
        Group::Export(_) => run::export_mps_cmd(&cfg)?,
    };
    Ok((name.to_string(), cfg, outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let started = Instant::now();
    match dispatch(&cli.group) {
        Ok((name, cfg, outcome)) => {
            if let Err(e) = run::write_manifest(&cfg, &name, &outcome, started) {
                eprintln!("error: {e}");
                return ExitCode::from(e.code());
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
