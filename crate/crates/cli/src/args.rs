use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "snf", version, about = "Hospital-to-SNF transfer policies: solve, compare, sweep, simulate, estimate, serve")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Read the command and its flags from a JSON object; flags given on the
    /// command line take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal policy and values for one instance.
    Solve(SolveArgs),
    /// Average cost of every policy on one instance, with both gap conventions.
    Compare(CompareArgs),
    /// Random scenario instances: optimal vs myopic vs r+pr, one CSV row each.
    Sweep(SweepArgs),
    /// Monte Carlo estimate of a policy's average cost.
    Simulate(SimulateArgs),
    /// Readmission rates by facility and patient type from discharge records.
    Estimate(EstimateArgs),
    /// HTTP advisor over one instance.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Avg,
    Disc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Optimal,
    Myopic,
    Rpr,
    TwoStep,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "avg")]
    pub criterion: CriterionArg,
    /// Discount factor; required with `--criterion disc`, rejected otherwise.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Weight of the two-step heuristic.
    #[arg(long, default_value_t = 0.75)]
    pub w: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: u8,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Number of instances.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss penalty.
    #[arg(long = "K", alias = "k", default_value_t = 100.0)]
    pub loss_penalty: f64,
    /// Rate table JSON (as written by `estimate`) for the costs; the packaged
    /// default rates when omitted.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Discharge probability per patient type, comma separated; 0.2 each
    /// when omitted.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub policy: PolicyArg,
    #[arg(long, default_value_t = 0.75)]
    pub w: f64,
    #[arg(long, default_value_t = snf_core::simulate::DEFAULT_HORIZON)]
    pub horizon: u64,
    #[arg(long, default_value_t = snf_core::simulate::DEFAULT_BURN_IN)]
    pub burn_in: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dense index of the initial state.
    #[arg(long, default_value_t = 0)]
    pub start_state: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Discharge CSV: readmitted, snf, patient_type, then covariates.
    #[arg(long)]
    pub data: PathBuf,
    /// Bootstrap resamples for 95% intervals; 0 for point estimates only.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Facility level order, comma separated; the first is the reference.
    #[arg(long, value_delimiter = ',')]
    pub facilities: Option<Vec<String>>,
    /// Patient-type level order, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub types: Option<Vec<String>>,
    /// Covariates to adjust for; every covariate column when omitted.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Prediction profile entries `name=value`; means and modes otherwise.
    #[arg(long, value_delimiter = ',')]
    pub profile: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Solve for the optimal policy before accepting requests.
    #[arg(long)]
    pub solve: bool,
    #[arg(long, default_value_t = 0.75)]
    pub w: f64,
    /// Append served recommendations to this CSV file.
    #[arg(long)]
    pub decision_log: Option<PathBuf>,
}
