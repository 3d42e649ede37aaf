use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "maars", version, about = "Multi-rate attack-aware randomized scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a task set (and optionally plants and a scenario) without writing anything.
    Validate(ValidateArgs),
    /// Prune every trusted period menu and write periods.json.
    Prune(CommonArgs),
    /// Prune, then generate the schedule pool and write pool.json.
    Generate(PoolArgs),
    /// Full design-time analysis, compared against the attack-unaware baseline.
    Analyze(PoolArgs),
    /// The attack-unaware baseline alone: minimum periods, no pruning.
    Baseline(PoolArgs),
    /// Closed-loop co-simulation under a scheduling policy.
    Simulate(SimulateArgs),
    /// Print the schedule ladder seen by an untrusted task.
    Ladder(LadderArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Task set JSON file, or one of tab1, tab2, tab3-low, tab3-high.
    #[arg(long)]
    taskset: String,
    /// Plant JSON file; may be repeated. Defaults to the bundled plants.
    #[arg(long)]
    plants: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, env = "MAARS_OUT_DIR", default_value = "maars-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    taskset: String,
    #[arg(long)]
    plants: Vec<PathBuf>,
    /// Attack scenario: a JSON file or an inline JSON object.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Randomized schedules in the pool, dealt round-robin over the specifications.
    #[arg(long, default_value_t = 1000)]
    seeds: usize,
    /// First seed of the pool.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Enumerate a specification exhaustively when it has at most this many schedules.
    #[arg(long)]
    exhaustive_budget: Option<usize>,
    /// Skip the inferability-ratio table.
    #[arg(long)]
    no_ir: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "maars", value_parser = ["static", "shuffle", "maars"])]
    policy: String,
    /// Run seeds: `7`, `1,2,3` or `1..5` (end exclusive).
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Hyper-periods to simulate.
    #[arg(long, default_value_t = 50)]
    epochs: u64,
    /// Attack scenario: a JSON file or an inline JSON object.
    #[arg(long)]
    scenario: Option<String>,
    /// Schedule store written by `analyze` or `baseline`; built on the fly when absent.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Pool size when the store is built on the fly.
    #[arg(long, default_value_t = 1000)]
    pool_seeds: usize,
    #[arg(long)]
    exhaustive_budget: Option<usize>,
    /// Build the on-the-fly store from the baseline instead of the pruned menus.
    #[arg(long)]
    baseline: bool,
    /// Disable process and measurement noise.
    #[arg(long)]
    no_noise: bool,
    /// Skip the per-slot trace.
    #[arg(long)]
    no_trace: bool,
}

#[derive(Debug, Args)]
struct LadderArgs {
    #[arg(long)]
    taskset: String,
    /// Priority index of the victim (a trusted task).
    #[arg(long)]
    victim: usize,
    /// Priority index of the observing untrusted task.
    #[arg(long)]
    attacker: usize,
    /// Trusted periods, comma separated. Defaults to the minimum periods.
    #[arg(long, value_delimiter = ',')]
    periods: Vec<u64>,
    /// Use a randomized schedule with this seed instead of fixed priority.
    #[arg(long)]
    seed: Option<u64>,
    /// Observation length in slots.
    #[arg(long)]
    observation: Option<u64>,
    /// Print CSV instead of the grid.
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&a),
        Command::Prune(a) => commands::prune(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Analyze(a) => commands::analyze(&a, false),
        Command::Baseline(a) => commands::analyze(&a, true),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Ladder(a) => commands::ladder(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
