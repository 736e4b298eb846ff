mod commands;
mod tables;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use igc_core::Error;

#[derive(Parser, Debug)]
#[command(name = "igc", version, about = "Interleaved group convolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate block configurations near a parameter budget, or count a network.
    Analyze(AnalyzeArgs),
    /// Check block paths against composed dense kernels.
    Verify(VerifyArgs),
    /// Train a network and write its history and checkpoint.
    Train(TrainArgs),
    /// Report the accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Compose one random block into a dense kernel.
    Compose(ComposeArgs),
    /// Print the budget tables as markdown.
    Tables(TablesArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Igc,
    Gpc,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Target parameter count per block.
    #[arg(long, required_unless_present = "arch")]
    target: Option<u64>,
    /// Spatial kernel size S = k·k.
    #[arg(long, default_value_t = 9)]
    s: u64,
    #[arg(long, value_enum, default_value_t = Family::Igc)]
    block: Family,
    /// Allowed relative distance from the target.
    #[arg(long, default_value_t = 0.03)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Render a markdown table instead of CSV/JSON.
    #[arg(long)]
    markdown: bool,
    /// Count a whole network described by an arch JSON file.
    #[arg(long, conflicts_with = "target")]
    arch: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 32)]
    input_hw: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Checks every L and M in 1..=grid-max.
    #[arg(long, default_value_t = 4)]
    grid_max: usize,
    /// Explicit comma-separated L/M values, overriding --grid-max.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<usize>>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    #[arg(long)]
    synth_classes: Option<usize>,
    #[arg(long, default_value_t = 50)]
    synth_per_class: usize,
    #[arg(long, default_value_t = 30)]
    synth_test_per_class: usize,
    #[arg(long, default_value_t = 16)]
    synth_hw: usize,
    #[arg(long, default_value_t = 2)]
    synth_shift: usize,
    #[arg(long, default_value_t = 1)]
    synth_smoothing: usize,
    #[arg(long, default_value_t = 0.3)]
    synth_noise: f64,
    /// Seed of the synthetic data (defaults to 2017).
    #[arg(long, default_value_t = 2017)]
    synth_seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Architecture JSON file.
    #[arg(long)]
    arch: std::path::PathBuf,
    /// CIFAR binary directory, or `synth`.
    #[arg(long)]
    data: String,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    /// Pad-and-crop plus flips on training batches.
    #[arg(long)]
    augment: bool,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Single)]
    precision: PrecisionArg,
    /// Directory for history.csv and model.ckpt.
    #[arg(long, default_value = ".")]
    out_dir: std::path::PathBuf,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: std::path::PathBuf,
    /// CIFAR binary directory, or `synth`.
    #[arg(long)]
    data: String,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args, Debug)]
struct ComposeArgs {
    #[arg(long)]
    l: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the composed kernel matrix as CSV.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct TablesArgs {
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

/// Failure of a run, mapped onto the exit code.
enum Failure {
    Verification(String),
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Shape(_) | Error::Geometry(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("IGC_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().map_err(|_| {
        Failure::Usage(format!(
            "IGC_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Verify(a) => commands::verify(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compose(a) => commands::compose(a),
        Command::Tables(a) => tables::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
