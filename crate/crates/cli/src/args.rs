use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "essr", version, about = "Worst-case security region analysis under sequential line outages")]
pub struct Cli {
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub group: Group,
}

#[derive(Debug, Subcommand)]
pub enum Group {
    /// Network cases.
    #[command(subcommand)]
    Case(CaseCmd),
    /// Failure scenarios.
    #[command(subcommand)]
    Scen(ScenCmd),
    /// Per-scenario feasibility.
    #[command(subcommand)]
    Feas(FeasCmd),
    /// Worst case over a scenario set.
    #[command(subcommand)]
    Worst(WorstCmd),
    /// Dispatch-region sweeps.
    #[command(subcommand)]
    Region(RegionCmd),
    /// Problem export.
    #[command(subcommand)]
    Export(ExportCmd),
}

#[derive(Debug, Subcommand)]
pub enum CaseCmd {
    /// Check a case against the model invariants.
    Validate(Common),
}

#[derive(Debug, Subcommand)]
pub enum ScenCmd {
    /// Enumerate or sample scenarios and write them as JSON.
    Gen(Common),
}

#[derive(Debug, Subcommand)]
pub enum FeasCmd {
    /// Minimum total slack of each scenario's multi-period system.
    Check(FeasArgs),
}

#[derive(Debug, Subcommand)]
pub enum WorstCmd {
    /// Worst-case slack over the scenario set.
    Solve(WorstArgs),
}

#[derive(Debug, Subcommand)]
pub enum RegionCmd {
    /// Classify a grid of t0 dispatch points.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum ExportCmd {
    /// Write the single-level worst-case MILP in fixed-format MPS.
    Mps(Common),
}

/// Inputs shared by every command. Flags override the config file.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in case: seven_bus or ieee118.
    #[arg(long, conflicts_with = "case")]
    pub fixture: Option<String>,
    /// Case file: native JSON, or MATPOWER when it ends in `.m`.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Exposure model JSON (defaults to the fixture's storm path).
    #[arg(long)]
    pub exposure: Option<PathBuf>,
    /// Failure probability for the built-in exposure.
    #[arg(long = "p")]
    pub probability: Option<f64>,
    /// Scenario source: enumerate, sample, table2, or a scenario JSON file.
    #[arg(long = "scen")]
    pub scenarios: Option<String>,
    /// Monte Carlo draws (implies --scen sample when no source is given).
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outage model: persistent or transient.
    #[arg(long)]
    pub outage: Option<String>,
    /// Ramp limit applied to every generator (p.u. per period).
    #[arg(long)]
    pub ramp: Option<f64>,
    /// Line capacity override as LINE=CAPACITY (repeatable).
    #[arg(long = "capacity", value_name = "LINE=CAP")]
    pub capacity: Vec<String>,
    /// Coupling mode: recourse or shared.
    #[arg(long)]
    pub mode: Option<String>,
    /// Generator outputs at t0, comma separated in case order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t0: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Branch-and-bound node limit.
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Branch-and-bound time limit in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeasArgs {
    #[command(flatten)]
    pub common: Common,
    /// Check only this scenario (1-based).
    #[arg(long)]
    pub scenario: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WorstArgs {
    #[command(flatten)]
    pub common: Common,
    /// Enumerate scenarios instead of solving the single-level MILP.
    #[arg(long)]
    pub oracle: bool,
    /// Also write the flow table of the selected scenario.
    #[arg(long)]
    pub flows: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// First axis as GEN:MIN:MAX:STEP.
    #[arg(long)]
    pub x: Option<String>,
    /// Second axis as GEN:MIN:MAX:STEP.
    #[arg(long)]
    pub y: Option<String>,
    /// Generator balancing t0 output against t0 load.
    #[arg(long)]
    pub balance: Option<usize>,
}
