//! `mlci`: infer hard constraints from demonstrations on tabular MDPs.
//!
//! Exit codes: 0 success, 2 infeasible demonstrations or trajectories
//! (including reward-learning divergence), 3 unreadable or malformed input,
//! 64 usage errors.

mod commands;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlci_core::mdp::ConstraintKind;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mlci", version, about = "Maximum likelihood constraint inference for tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Infer constraints from demonstrations with the greedy KL-stopped search.
    Infer(InferArgs),
    /// Sample demonstrations from the MaxEnt policy of an MDP.
    Sample(SampleArgs),
    /// Render state, action and feature accrual heatmaps.
    Render(RenderArgs),
    /// Compute false-positive and KL metrics for one result or a sweep.
    Eval(EvalArgs),
    /// Fit linear reward weights to demonstrations by MaxEnt IRL.
    LearnReward(LearnRewardArgs),
    /// Build a grid world and write its nominal MDP and planted constraints.
    BuildGrid(BuildGridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    State,
    Action,
    Feature,
}

impl From<Kind> for ConstraintKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::State => ConstraintKind::State,
            Kind::Action => ConstraintKind::Action,
            Kind::Feature => ConstraintKind::Feature,
        }
    }
}

#[derive(Debug, Args)]
struct InferArgs {
    /// Nominal MDP (`mlci-mdp/1`).
    #[arg(long, required_unless_present = "grid", conflicts_with = "grid")]
    mdp: Option<PathBuf>,
    /// Grid config (shipped name or TOML/JSON path); enables cell-form demos.
    #[arg(long)]
    grid: Option<String>,
    /// Demonstrations (`mlci-demos/1`).
    #[arg(long)]
    demos: PathBuf,
    /// Minimum KL reduction needed to accept a constraint.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Constraint classes to consider.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Kind::State, Kind::Action, Kind::Feature])]
    hypothesis: Vec<Kind>,
    /// Iteration cap; defaults to the number of augmented indicators.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Recorded in the manifest; inference itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result file (`mlci-result/1`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// MDP to sample from (`mlci-mdp/1`).
    #[arg(long)]
    mdp: PathBuf,
    /// Number of trajectories.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constraints (`mlci-constraints/1`) applied before sampling.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Demonstrations file (`mlci-demos/1`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Ascii,
    Svg,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Precomputed accrual history (`mlci-accrual/1`).
    #[arg(long, required_unless_present = "mdp", conflicts_with_all = ["mdp", "result", "constraints"])]
    accrual: Option<PathBuf>,
    /// MDP whose MaxEnt accruals are shaded (`mlci-mdp/1`).
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Marks the constraints selected in this result (`mlci-result/1`).
    #[arg(long, requires = "mdp")]
    result: Option<PathBuf>,
    /// Marks these constraints (`mlci-constraints/1`).
    #[arg(long, requires = "mdp")]
    constraints: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Ascii)]
    format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also writes the computed accrual history.
    #[arg(long, requires = "mdp")]
    save_accrual: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Result to score (`mlci-result/1`).
    #[arg(long, requires_all = ["truth", "mdp"], conflicts_with = "grid")]
    result: Option<PathBuf>,
    /// Ground-truth constraints (`mlci-constraints/1`).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Nominal MDP the result was inferred on.
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Grid config for a sweep (shipped name or path).
    #[arg(long, required_unless_present = "result")]
    grid: Option<String>,
    /// Sweep demonstration counts [default: 1,3,10,30,100]; for a single
    /// result, overrides the count recorded in its manifest.
    #[arg(long, value_delimiter = ',')]
    n_demos: Option<Vec<usize>>,
    /// Sweep thresholds [default: 0.03,0.1,0.3].
    #[arg(long, value_delimiter = ',', conflicts_with = "result")]
    thresholds: Option<Vec<f64>>,
    /// Seeds `0..seeds` per sweep cell.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Per-run CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-cell mean and standard error CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LearnRewardArgs {
    /// MDP whose features and dynamics are used; its reward is ignored.
    #[arg(long)]
    mdp_skeleton: PathBuf,
    #[arg(long)]
    demos: PathBuf,
    /// Gradient step size.
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Weights file (`mlci-weights/1`).
    #[arg(long)]
    out: PathBuf,
    /// Also writes the skeleton with the learned reward (`mlci-mdp/1`).
    #[arg(long)]
    out_mdp: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildGridArgs {
    /// Shipped config name or TOML/JSON path.
    #[arg(long)]
    config: String,
    /// Nominal MDP (`mlci-mdp/1`).
    #[arg(long)]
    out_mdp: PathBuf,
    /// Planted constraints (`mlci-constraints/1`).
    #[arg(long)]
    out_truth: Option<PathBuf>,
    /// The MDP demonstrations are drawn from (`mlci-mdp/1`).
    #[arg(long)]
    out_true_mdp: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("MLCI_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("MLCI_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Infer(a) => commands::infer(a),
        Command::Sample(a) => commands::sample(a),
        Command::Render(a) => commands::render(a),
        Command::Eval(a) => commands::eval(a),
        Command::LearnReward(a) => commands::learn_reward(a),
        Command::BuildGrid(a) => commands::build_grid(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mlci: {e}");
            e.exit_code()
        }
    }
}
