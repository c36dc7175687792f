//! Command-line front end: design generation, test-function evaluation,
//! model fitting and reporting, and the replication experiments.

mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

/// Environment variable holding the default output directory for
/// artifacts whose `--out`/`--out-dir` flag is omitted.
pub const OUT_DIR_ENV: &str = "FUNKRIG_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "funkrig",
    version,
    about = "Space-filling designs and GP surrogates for experiments with functional inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a generalized Latin hypercube design over scalar and
    /// functional inputs.
    Design(DesignArgs),
    /// Evaluate an analytic test function on a stored design.
    Eval(EvalArgs),
    /// Fit a Gaussian-process surrogate to a design and its outputs.
    Fit(FitArgs),
    /// Predict mean and variance at new points from a stored model.
    Predict(PredictArgs),
    /// Leave-one-out predictions of a stored model on its own data.
    Loo(LooArgs),
    /// Per-input sensitivity scores 1 - g(1, theta).
    Sensitivity(SensitivityArgs),
    /// Fitted weight profiles of a weighting-enabled model.
    Weights(WeightsArgs),
    /// Replication experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct SaArgs {
    /// Geometric cooling factor in (0,1).
    #[arg(long = "sa-cooling", default_value_t = 0.95)]
    cooling: f64,
    /// Proposals per temperature step.
    #[arg(long = "sa-moves", default_value_t = 100)]
    moves: usize,
    /// Maximum temperature steps.
    #[arg(long = "sa-temps", default_value_t = 200)]
    temps: usize,
    /// Stop after this many improvement-free temperature steps.
    #[arg(long = "sa-patience", default_value_t = 20)]
    patience: usize,
    /// Fixed initial temperature (default: calibrated from probe moves).
    #[arg(long = "sa-initial-temp")]
    initial_temp: Option<f64>,
}

impl SaArgs {
    fn to_config(&self) -> funkrig::SaConfig {
        funkrig::SaConfig {
            initial_temp: self.initial_temp,
            cooling: self.cooling,
            moves_per_temp: self.moves,
            max_temps: self.temps,
            patience: self.patience,
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    /// Number of runs.
    #[arg(long)]
    n: usize,
    /// Number of scalar inputs.
    #[arg(long)]
    scalars: usize,
    /// Number of functional inputs.
    #[arg(long)]
    functionals: usize,
    /// Number of B-spline basis functions per functional input.
    #[arg(long = "K")]
    num_basis: usize,
    /// B-spline order (1 = piecewise constant, 4 = cubic).
    #[arg(long)]
    order: usize,
    /// Morris-Mitchell exponent.
    #[arg(long, default_value_t = 5.0)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sa: SaArgs,
    /// Output path (default: design.json under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Stored design file.
    #[arg(long)]
    design: PathBuf,
    /// Test function id (g1 or g2).
    #[arg(long)]
    function: String,
    /// Output CSV (default: data.csv under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Stored design file.
    #[arg(long)]
    design: PathBuf,
    /// CSV with the outputs (as written by `eval`).
    #[arg(long)]
    data: PathBuf,
    /// Kernel family: gauss or matern52.
    #[arg(long, default_value = "matern52")]
    kernel: String,
    /// Beta-density weighting of the functional inputs: on or off.
    #[arg(long, default_value = "off")]
    weighting: String,
    /// Random multistart points screened before the local search.
    #[arg(long, default_value_t = 50)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (default: model.json under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Stored model file.
    #[arg(long)]
    model: PathBuf,
    /// Design-shaped JSON file with the prediction points.
    #[arg(long, conflicts_with = "random")]
    points: Option<PathBuf>,
    /// Generate this many uniformly random points instead.
    #[arg(long)]
    random: Option<usize>,
    /// Seed for --random.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (default: predictions.csv under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LooArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output CSV (default: loo.csv under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output CSV (default: sensitivity.csv under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Grid resolution of the sampled profile.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Output CSV (default: weights.csv under $FUNKRIG_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV with the raw per-basis weights and omega.
    #[arg(long = "raw-out")]
    raw_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Weighted versus unweighted surrogate on the Branin benchmark.
    Weighting(WeightingArgs),
    /// RMSE sweep over B-spline orders at a fixed number of basis
    /// functions.
    OrderComparison(OrderArgs),
    /// Unconstrained maximin clustering pathology demonstration.
    Remark1(Remark1Args),
}

#[derive(Args)]
struct WeightingArgs {
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long = "K", default_value_t = 7)]
    num_basis: usize,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long = "test-size", default_value_t = 300)]
    test_size: usize,
    #[arg(long, default_value_t = 50)]
    starts: usize,
    /// Output directory (default: $FUNKRIG_OUT_DIR or the working dir).
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated spline orders to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4, 5])]
    orders: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long = "K", default_value_t = 7)]
    num_basis: usize,
    #[arg(long = "test-size", default_value_t = 600)]
    test_size: usize,
    #[arg(long, default_value_t = 50)]
    starts: usize,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Remark1Args {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    scalars: usize,
    #[arg(long, default_value_t = 2)]
    functionals: usize,
    #[arg(long = "K", default_value_t = 8)]
    num_basis: usize,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value_t = 5.0)]
    q: f64,
    #[command(flatten)]
    sa: SaArgs,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

/// Resolve an output path: explicit flag wins, otherwise the default
/// file name under $FUNKRIG_OUT_DIR (or the working directory).
fn resolve_out(flag: Option<PathBuf>, default_name: &str) -> PathBuf {
    flag.unwrap_or_else(|| {
        let base = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_default();
        base.join(default_name)
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design(args) => commands::design(args),
        Command::Eval(args) => commands::eval(args),
        Command::Fit(args) => commands::fit(args),
        Command::Predict(args) => commands::predict(args),
        Command::Loo(args) => commands::loo(args),
        Command::Sensitivity(args) => commands::sensitivity(args),
        Command::Weights(args) => commands::weights(args),
        Command::Experiment(cmd) => match cmd {
            ExperimentCommand::Weighting(args) => commands::experiment_weighting(args),
            ExperimentCommand::OrderComparison(args) => commands::experiment_order(args),
            ExperimentCommand::Remark1(args) => commands::experiment_remark1(args),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version and 2 for usage errors.
            e.exit();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
