//! `qomp` command-line front end.
//!
//! Exit codes: 0 success, 2 bad input (flags, parse, dimensions),
//! 3 algorithm dead end, 4 oracle enumeration guard.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "qomp", version, about = "Greedy sparse recovery: OMP, GOMP and quasi-orthogonal matching pursuit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover a sparse signal from a matrix and a measurement file.
    Recover(RecoverArgs),
    /// Run the Monte Carlo exact-recovery grid.
    Bench(BenchArgs),
    /// Mutual coherence of a matrix file, or Monte Carlo coherence of Gaussian matrices.
    Coherence(CoherenceArgs),
    /// Best s-column fit by exhaustive search (small problems only).
    Oracle(OracleArgs),
    /// Write a seeded Gaussian problem instance to files.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Omp,
    Gomp,
    Qomp,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    measurement: PathBuf,
    /// Target sparsity S; the default iteration budget.
    #[arg(long)]
    sparsity: usize,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Indices added per GOMP iteration.
    #[arg(long, default_value_t = 2)]
    gomp_n: usize,
    /// Iteration budget (default: S, clamped to what the algorithm allows).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Absolute residual tolerance (default: 1e-9 * ||b||).
    #[arg(long)]
    tol: Option<f64>,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    m: usize,
    /// Comma-separated n/m ratios.
    #[arg(long, value_delimiter = ',', required = true)]
    ratios: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    sparsity_min: usize,
    /// Default: floor(0.4 m).
    #[arg(long)]
    sparsity_max: Option<usize>,
    #[arg(long)]
    trials: usize,
    /// Comma-separated subset of omp_s, omp_2s, gomp2_s, gomp2_2s, qomp_s.
    #[arg(long, value_delimiter = ',', required = true)]
    algos: Vec<String>,
    #[arg(long)]
    seed: u64,
    /// Noise with ||v|| = E.
    #[arg(long, conflicts_with = "noise_ratio")]
    noise_eps: Option<f64>,
    /// Noise with ||v|| = R * min |x_i| per instance.
    #[arg(long)]
    noise_ratio: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    values: Values,
    #[arg(long, env = "PURSUIT_THREADS", default_value_t = 1)]
    threads: usize,
    /// Record mean wall-clock time per cell (makes the report run-dependent).
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Values {
    Gaussian,
    Rademacher,
}

#[derive(Args)]
struct CoherenceArgs {
    #[arg(long, conflicts_with_all = ["m", "n", "aspect"])]
    matrix: Option<PathBuf>,
    /// Comma-separated row counts for generated matrices.
    #[arg(long, value_delimiter = ',', required_unless_present = "matrix")]
    m: Vec<usize>,
    /// Column count (single m only).
    #[arg(long, conflicts_with = "aspect")]
    n: Option<usize>,
    /// n/m ratio (default 4).
    #[arg(long)]
    aspect: Option<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    measurement: PathBuf,
    #[arg(long)]
    sparsity: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sparsity: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    noise_eps: Option<f64>,
    #[arg(long)]
    matrix_out: PathBuf,
    #[arg(long)]
    measurement_out: PathBuf,
    /// Also write the true signal as JSON.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long)]
    binary: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Recover(a) => commands::recover(a),
        Command::Bench(a) => commands::bench(a),
        Command::Coherence(a) => commands::coherence(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Generate(a) => commands::generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qomp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
