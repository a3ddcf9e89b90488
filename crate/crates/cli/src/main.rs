//! `biolite`: synthesize data, train, evaluate, segment, benchmark and
//! describe the network.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "biolite", version, about = "Lightweight nozzle/bioink segmentation")]
struct Cli {
    /// Worker threads for data loading and kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset manifest.
    Train(TrainArgs),
    /// Evaluate a model on one split of a dataset.
    Eval(EvalArgs),
    /// Segment a single image.
    Infer(InferArgs),
    /// Measure per-frame inference latency.
    Bench(BenchArgs),
    /// Print per-layer parameter and FLOP counts.
    Describe(DescribeArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value = "easy")]
    pub difficulty: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side length of the square frames.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest, or a directory containing `manifest.tsv`.
    #[arg(long)]
    pub data: PathBuf,
    /// `key = value` config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub image_size: Option<u32>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub no_clahe: bool,
    #[arg(long)]
    pub no_augment: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, required_unless_present = "self_test")]
    pub weights: Option<PathBuf>,
    /// Score the ground-truth masks against themselves.
    #[arg(long)]
    pub self_test: bool,
    /// Seed for deriving a split when the manifest records none (default:
    /// the manifest's own seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also report metrics averaged per image.
    #[arg(long)]
    pub per_image: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Output index-mask PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a colour overlay PNG here.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Run the softmax before the argmax instead of fusing it away.
    #[arg(long)]
    pub explicit_softmax: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Weights to time; a freshly initialized default model otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Input images, cycled; synthetic frames otherwise.
    #[arg(long)]
    pub image: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DescribeArgs {
    #[arg(long, conflicts_with = "config")]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Write the per-layer table as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    // The benchmark builds its own pool; everything else uses the global one.
    if let Some(n) = cli.threads {
        if !matches!(cli.command, Command::Bench(_)) {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
        }
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Bench(a) => commands::bench(a, cli.threads.unwrap_or(1)),
        Command::Describe(a) => commands::describe(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()));
            return ExitCode::from(2);
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
