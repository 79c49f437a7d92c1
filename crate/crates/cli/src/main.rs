use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::Preset;

/// Partial-to-partial point cloud registration with outlier-aware optimal transport.
#[derive(Debug, Parser)]
#[command(name = "otreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a directory of synthetic registration pairs.
    Datagen(DatagenArgs),
    /// Register a source cloud onto a target cloud.
    Register(RegisterArgs),
    /// Run methods over a scenario directory and report error metrics.
    Benchmark(BenchmarkArgs),
    /// Print the thresholded ground-truth matching for a pair.
    Gt(GtArgs),
}

/// Solver settings shared by `register` and `benchmark`.
#[derive(Debug, Args)]
struct SolverArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score of the outlier row and column.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Entropy weight of the transport problem.
    #[arg(long)]
    lambda: Option<f64>,
    /// Sinkhorn iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// ICP iteration budget.
    #[arg(long)]
    icp_iterations: Option<usize>,
    /// Drop ICP pairs farther apart than this.
    #[arg(long)]
    max_pair_distance: Option<f64>,
    /// Refine the one-shot OT estimate with ICP.
    #[arg(long)]
    refine: bool,
    /// Weight correspondences by transport plan mass instead of uniformly.
    #[arg(long)]
    plan_mass_weights: bool,
    /// Per-component noise of oracle descriptors.
    #[arg(long, default_value_t = 0.1)]
    oracle_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Ot,
    Icp,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Ot => "ot",
            Method::Icp => "icp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Provider {
    /// Local geometry signatures computed from the clouds.
    Handcrafted,
    /// Descriptors read from --source-desc and --target-desc.
    File,
    /// Synthetic descriptors derived from a known ground-truth transform.
    Oracle,
}

#[derive(Debug, Args)]
struct DatagenArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Number of pairs to generate (default 10).
    #[arg(long)]
    pairs: Option<usize>,
    /// Master seed; per-pair seeds are derived from it.
    #[arg(long, env = "OTREG_SEED")]
    seed: Option<u64>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full cloud (.xyz, .off or .ply) used for every pair instead of synthetic shapes.
    #[arg(long, conflicts_with = "shape")]
    input: Option<PathBuf>,
    /// Synthetic shape; by default pairs cycle through all shapes.
    #[arg(long)]
    shape: Option<String>,
    /// Points sampled on synthetic shapes before subsampling.
    #[arg(long, default_value_t = 2048)]
    full_points: usize,
    /// Override the per-coordinate noise standard deviation.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum, default_value = "ot")]
    method: Method,
    #[arg(long, value_enum, default_value = "handcrafted")]
    provider: Provider,
    #[arg(long)]
    source_desc: Option<PathBuf>,
    #[arg(long)]
    target_desc: Option<PathBuf>,
    /// Ground-truth transform JSON, required by the oracle provider.
    #[arg(long)]
    gt_transform: Option<PathBuf>,
    /// Initial transform JSON for ICP.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Seed for oracle descriptors.
    #[arg(long, env = "OTREG_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the estimated transform here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Scenario directory written by `datagen`.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ot,icp")]
    methods: Vec<Method>,
    /// Descriptor provider for the OT method.
    #[arg(long, value_enum, default_value = "oracle")]
    provider: Provider,
    /// Worker threads; results are reported in pair order regardless.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for oracle descriptors.
    #[arg(long, env = "OTREG_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct GtArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Transform JSON mapping the source onto the target.
    #[arg(long)]
    transform: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Write matched index pairs, one "i j" per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unreadable/unparsable inputs (exit 1).
    Usage(String),
    /// Failure while running (exit 2).
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Datagen(args) => commands::datagen(args),
        Command::Register(args) => commands::register(args),
        Command::Benchmark(args) => commands::benchmark(args),
        Command::Gt(args) => commands::gt(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
