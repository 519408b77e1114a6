//! `netlearn`: plan cost-minimal cooperation and data-feed topologies for
//! distributed learning, check the plans against a Monte Carlo simulator,
//! and fit error-law coefficients from training observations.

mod commands;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes: 0 feasible/success, 1 error, 2 proven infeasible,
/// 3 validation failure (simulation disagrees with the analysis).
#[derive(Parser)]
#[command(name = "netlearn", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select cooperation edges, data feeds, and an epoch count that meet
    /// the error and deadline targets at minimal total cost
    Optimize(OptimizeArgs),
    /// Replay a planned configuration through the Monte Carlo simulator
    /// and compare against the analytic learning time
    Simulate(SimulateArgs),
    /// Fit error-law coefficients to observed (X, K, gamma, error) rows
    Fit(FitArgs),
    /// Emit a random benchmark instance
    GenInstance(GenInstanceArgs),
    /// Run every planner on one instance and tabulate the results
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    DoubleClimb,
    OptUnif,
    Ga,
    BruteForce,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::DoubleClimb => "double-climb",
            Algorithm::OptUnif => "opt-unif",
            Algorithm::Ga => "ga",
            Algorithm::BruteForce => "brute-force",
        }
    }
}

/// Exactly one source: a ready profile, or observations to fit plus an
/// explicit error target.
#[derive(Args)]
struct ProfileSource {
    /// Learning profile JSON (coefficients and targets)
    #[arg(long, value_name = "FILE", conflicts_with_all = ["fit_observations", "eps_max", "t_max"], required_unless_present = "fit_observations")]
    profile: Option<PathBuf>,
    /// Observations CSV (header X,K,gamma,error) to fit coefficients from
    #[arg(long, value_name = "FILE", requires = "eps_max")]
    fit_observations: Option<PathBuf>,
    /// Error target, required when fitting from observations
    #[arg(long, value_name = "EPS")]
    eps_max: Option<f64>,
    /// Deadline on total learning time (absent = none)
    #[arg(long, value_name = "TIME", requires = "fit_observations")]
    t_max: Option<f64>,
}

/// Scenario rate scaling shared by the planning commands.
#[derive(Args)]
struct RateScale {
    /// Multiply every source rate
    #[arg(long, value_name = "FACTOR", default_value_t = 1.0, conflicts_with = "rich")]
    multiplier: f64,
    /// Rich scenario: multiply every source rate by 5
    #[arg(long)]
    rich: bool,
}

impl RateScale {
    fn factor(&self) -> f64 {
        if self.rich {
            netlearn::RICH_MULTIPLIER
        } else {
            self.multiplier
        }
    }
}

#[derive(Args)]
struct GaTuning {
    /// Genetic planner population size
    #[arg(long, value_name = "N", default_value_t = 100)]
    ga_population: usize,
    /// Genetic planner generations
    #[arg(long, value_name = "N", default_value_t = 50)]
    ga_generations: usize,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Instance topology JSON
    #[arg(long, value_name = "FILE")]
    instance: PathBuf,
    #[command(flatten)]
    source: ProfileSource,
    /// Planner to run
    #[arg(long, value_enum, default_value_t = Algorithm::DoubleClimb)]
    algorithm: Algorithm,
    /// Seed for the genetic planner
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scale: RateScale,
    /// Disable the double climb's early-stop rule
    #[arg(long)]
    no_break: bool,
    /// State bound for the exhaustive planner
    #[arg(long, value_name = "N", default_value_t = 1 << 22)]
    max_states: u128,
    #[command(flatten)]
    ga: GaTuning,
    /// Directory for solution.json and trace.csv
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Instance topology JSON
    #[arg(long, value_name = "FILE")]
    instance: PathBuf,
    /// Solution JSON produced by `optimize`
    #[arg(long, value_name = "FILE")]
    solution: PathBuf,
    /// Replications (at least 100)
    #[arg(long, default_value_t = 10_000)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Broadcast one generation-time draw per source per epoch instead of
    /// drawing independently per data edge
    #[arg(long)]
    shared_draws: bool,
    /// Largest tolerated |analytic - simulated| in standard errors before
    /// the run counts as a validation failure (exit 3)
    #[arg(long, value_name = "SE", default_value_t = 5.0)]
    max_se_dev: f64,
    /// Directory for gantt.csv, simstats.json, and comparison.csv
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Observations CSV with header X,K,gamma,error
    #[arg(long, value_name = "FILE")]
    observations: PathBuf,
    /// Error target to embed so the output doubles as a profile
    #[arg(long, value_name = "EPS")]
    eps_max: Option<f64>,
    /// Deadline to embed alongside the error target
    #[arg(long, value_name = "TIME", requires = "eps_max")]
    t_max: Option<f64>,
    /// Output path
    #[arg(long, value_name = "FILE", default_value = "profile.json")]
    out: PathBuf,
}

#[derive(Args)]
struct GenInstanceArgs {
    /// Number of learner nodes
    #[arg(long, value_name = "N")]
    l_nodes: usize,
    /// Number of source nodes
    #[arg(long, value_name = "N")]
    i_nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scale: RateScale,
    /// Output path
    #[arg(long, value_name = "FILE", default_value = "instance.json")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Instance topology JSON
    #[arg(long, value_name = "FILE")]
    instance: PathBuf,
    #[command(flatten)]
    source: ProfileSource,
    /// Seed for the genetic planner
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scale: RateScale,
    /// Also run the exhaustive planner
    #[arg(long)]
    with_brute_force: bool,
    /// State bound for the exhaustive planner
    #[arg(long, value_name = "N", default_value_t = 1 << 22)]
    max_states: u128,
    #[command(flatten)]
    ga: GaTuning,
    /// Directory for compare.csv
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("NETLEARN_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .context("NETLEARN_THREADS must be a positive integer")?;
        anyhow::ensure!(n > 0, "NETLEARN_THREADS must be a positive integer");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("installing the global thread pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors must not collide with exit 2 (proven infeasible):
    // route them to 1; --help and --version stay 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let run = init_threads().and_then(|()| match cli.command {
        Command::Optimize(args) => commands::optimize(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Fit(args) => commands::fit(args),
        Command::GenInstance(args) => commands::gen_instance(args),
        Command::Compare(args) => commands::compare(args),
    });
    match run {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
