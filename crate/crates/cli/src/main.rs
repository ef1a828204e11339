//! `jgl`: fit, cross-validate, simulate and evaluate joint graphical lasso
//! models from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "jgl", version, about = "Joint graphical lasso via proximal gradient methods")]
struct Cli {
    /// Worker threads for parallel fits (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate precision matrices for one or more classes.
    Fit(FitArgs),
    /// Choose (lambda1, lambda2) by D-fold cross-validation.
    Cv(CvArgs),
    /// Generate a synthetic ground-truth bundle.
    Simulate(SimulateArgs),
    /// Score fits against a ground-truth bundle.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Ista,
    Mista,
    Gista,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PenaltyArg {
    Fused,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StopRuleArg {
    RelativeError,
    ObjectiveError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StepInitArg {
    #[value(alias = "bb")]
    BarzilaiBorwein,
    Safe,
    Fixed,
}

/// Per-class input: sample CSVs, or covariance CSVs with sample counts.
#[derive(Debug, Args)]
struct InputArgs {
    /// Sample matrix CSV (n_k rows, p columns, no header), one per class.
    #[arg(long, value_name = "CSV", conflicts_with = "cov")]
    samples: Vec<PathBuf>,

    /// Covariance matrix CSV (p x p), one per class; needs --n.
    #[arg(long, value_name = "CSV", requires = "n")]
    cov: Vec<PathBuf>,

    /// Sample count for each --cov, in the same order.
    #[arg(long, value_name = "COUNT")]
    n: Vec<usize>,

    /// Subtract per-class column means from sample input.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    center: bool,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,

    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,

    #[arg(long, value_enum, default_value_t = StopRuleArg::RelativeError)]
    stop_rule: StopRuleArg,

    #[arg(long, value_enum, default_value_t = StepInitArg::BarzilaiBorwein)]
    step_init: StepInitArg,

    /// Step shrink factor for backtracking, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    backtrack_c: f64,

    /// First trial step.
    #[arg(long, default_value_t = 1.0)]
    eta0: f64,

    /// Reference optimum F* for --stop-rule objective-error.
    #[arg(long, value_name = "F")]
    reference_objective: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    solver: SolverArgs,

    #[arg(long, value_enum, default_value_t = AlgorithmArg::Ista)]
    algorithm: AlgorithmArg,

    #[arg(long, value_enum, default_value_t = PenaltyArg::Fused)]
    penalty: PenaltyArg,

    #[arg(long)]
    lambda1: f64,

    /// Coupling weight; not accepted with --algorithm gista.
    #[arg(long)]
    lambda2: Option<f64>,

    /// Entries with magnitude at or below this are not exported as edges.
    #[arg(long, default_value_t = 0.0)]
    edge_threshold: f64,

    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CvArgs {
    /// Sample matrix CSV, one per class.
    #[arg(long, value_name = "CSV", required = true)]
    samples: Vec<PathBuf>,

    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    center: bool,

    #[command(flatten)]
    solver: SolverArgs,

    #[arg(long, value_enum, default_value_t = AlgorithmArg::Ista)]
    algorithm: AlgorithmArg,

    #[arg(long, value_enum, default_value_t = PenaltyArg::Fused)]
    penalty: PenaltyArg,

    #[arg(long, default_value_t = 5)]
    folds: usize,

    /// lambda1 values: a comma list, or log:COUNT:MIN:MAX.
    #[arg(long)]
    grid_l1: String,

    /// lambda2 values: a comma list, or log:COUNT:MIN:MAX.
    #[arg(long)]
    grid_l2: String,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    p: usize,

    #[arg(long, default_value_t = 2)]
    classes: usize,

    /// Total samples across classes.
    #[arg(long, default_value_t = 600)]
    n_total: usize,

    /// Relative class sizes, comma separated (default: equal).
    #[arg(long, value_delimiter = ',')]
    shares: Vec<f64>,

    #[arg(long, default_value_t = 0.1)]
    density: f64,

    #[arg(long, default_value_t = 0.5)]
    common_fraction: f64,

    #[arg(long, default_value_t = 0.3)]
    signal_lo: f64,

    #[arg(long, default_value_t = 0.6)]
    signal_hi: f64,

    #[arg(long, default_value_t = 1.0)]
    diag_margin: f64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory written by `jgl simulate`.
    #[arg(long)]
    truth: PathBuf,

    /// Directory written by `jgl fit`; repeat for a ladder, ordered by
    /// decreasing lambda1.
    #[arg(long = "fit", value_name = "DIR", required = true)]
    fits: Vec<PathBuf>,

    /// Entries with magnitude at or below this count as absent.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,

    /// F* for the convergence trace; defaults to each report's reference
    /// objective, else its final objective.
    #[arg(long, value_name = "F")]
    fstar: Option<f64>,

    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Cv(a) => commands::cv(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
