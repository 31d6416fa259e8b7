//! Command line front end: fit analytic targets, rasterize checkpoints,
//! benchmark the kernels, run the synthetic sequence task, and export kernel
//! images. Every parameter can come from a flag or (for fit and sequence)
//! from a TOML file, with flags taking precedence. Exit codes: 0 success,
//! 2 for usage or config errors, 1 for runtime failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<smpconv::SmpError> for CliError {
    fn from(e: smpconv::SmpError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "smpconv", version, about = "Point-set convolution kernels: training, rasterization, benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a point-set kernel to an analytic 2D target and write the loss trace.
    Fit(FitArgs),
    /// Rasterize a checkpointed filter at a chosen resolution into a CSV.
    Rasterize(RasterizeArgs),
    /// Time rasterization and convolution workloads on this machine.
    Bench(BenchArgs),
    /// Train classifiers on the synthetic first-sample sequence task.
    Sequence(SequenceArgs),
    /// Export a checkpointed 2D kernel as a grayscale image with a point overlay.
    Visualize(VisualizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TargetArg {
    /// Product of sines target.
    Sinsin,
    /// Radial chirp target.
    Chirp,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Positions, weights, and radii all train.
    Moving,
    /// Positions frozen at their initialization.
    Fixed,
    /// Positions and radii frozen; only weights train.
    FixedAll,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelArg {
    /// Full-length kernels built from point sets.
    Smp,
    /// Short dense kernels (see --taps).
    Dense,
}

#[derive(Args)]
struct FitArgs {
    /// Analytic target function.
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    /// Which parameter groups train.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Number of points in the filter.
    #[arg(long)]
    points: Option<usize>,
    /// Spread of the initial point positions.
    #[arg(long)]
    sigma: Option<f64>,
    /// Initial radius of every point.
    #[arg(long)]
    r_init: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Training steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per grid axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Directory receiving all output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RasterizeArgs {
    /// Checkpoint produced by `fit`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Samples per grid axis (1D filters use the (-1,0) domain, 2D (-1,1) squared).
    #[arg(long, default_value_t = 33)]
    grid: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Output file name inside --out-dir.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Timed repetitions per configuration (minimum 3).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Square input image edge length.
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    /// Input image channels.
    #[arg(long, default_value_t = 2)]
    channels: usize,
    /// Allow multi-threaded execution instead of the pinned single thread.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SequenceArgs {
    /// Classifier to train.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Taps per layer for the dense model.
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Hidden channels in both convolution layers.
    #[arg(long)]
    hidden: Option<usize>,
    /// Points per filter for the smp model.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    r_init: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Destroy the labels to confirm accuracy falls to chance.
    #[arg(long)]
    shuffle_labels: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    /// Checkpoint produced by `fit`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Samples per image axis.
    #[arg(long, default_value_t = 65)]
    grid: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Image file name inside --out-dir; channel and overlay suffixes derive from it.
    #[arg(long, default_value = "kernel.pgm")]
    name: String,
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Fit(args) => commands::cmd_fit(config::resolve_fit(args)?),
        Command::Rasterize(args) => commands::cmd_rasterize(args.checkpoint, args.grid, args.out_dir, args.name),
        Command::Bench(args) => {
            commands::cmd_bench(args.reps, args.image_size, args.channels, args.parallel, args.out_dir)
        }
        Command::Sequence(args) => commands::cmd_sequence(config::resolve_sequence(args)?),
        Command::Visualize(args) => commands::cmd_visualize(args.checkpoint, args.grid, args.out_dir, args.name),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
