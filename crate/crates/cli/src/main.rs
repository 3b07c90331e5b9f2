//! `rsen`: train, run and evaluate the deraining network.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exit::Failure;

#[derive(Debug, Parser)]
#[command(name = "rsen", version, about = "Single-image rain removal with a residual squeeze-and-excitation network")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// Print per-epoch training rows and other debug output.
    #[arg(short, long, global = true, conflicts_with = "quiet")]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network from a `key = value` config file.
    Train(TrainArgs),
    /// Remove rain from one PNG image.
    Derain(DerainArgs),
    /// Score predicted images against ground truth (PSNR and SSIM over RGB).
    Eval(EvalArgs),
    /// Time forward passes on a square input.
    Bench(BenchArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Write rainy/clean pair directories with synthetic streaks.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Config file with model.*, train.* keys. Relative paths inside it
    /// resolve against the file's directory.
    #[arg(long)]
    config: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DerainArgs {
    /// Rainy 8-bit RGB PNG.
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint file.
    #[arg(long)]
    weights: PathBuf,
    /// Where to write the derained PNG.
    #[arg(long)]
    output: PathBuf,
    /// Also write the estimated rain layer, min-max normalized.
    #[arg(long)]
    dump_streaks: Option<PathBuf>,
    /// Check the checkpoint against the model.* keys of this file instead of
    /// the configuration stored inside it.
    #[arg(long)]
    model_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of predicted PNGs.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth PNGs with the same file names.
    #[arg(long)]
    gt: PathBuf,
    /// Write the per-image CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Checkpoint to time; without it a randomly initialized network is used.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input side in pixels; must be a multiple of 4.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Timed runs.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Untimed runs before timing.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Channel multiplier of the random network when no weights are given.
    #[arg(long, default_value = "1")]
    scale: String,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Channel multiplier of the toy network; thresholds do not depend on it.
    #[arg(long, default_value = "0.25")]
    scale: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side of the square toy input.
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Break one gradient rule on purpose (negative control).
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory of clean PNGs. Without it, procedural backgrounds are generated.
    #[arg(long)]
    clean_dir: Option<PathBuf>,
    /// Output root; receives `rainy/` and `clean/`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of procedural backgrounds when no clean directory is given.
    #[arg(long, default_value_t = 8)]
    generate: usize,
    /// Side of procedural backgrounds.
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    /// Config file with rain.* keys; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    /// Mean streak angle from vertical, degrees in [-45, 45].
    #[arg(long, allow_hyphen_values = true)]
    angle: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    /// Streak strength in [0, 1].
    #[arg(long)]
    intensity: Option<f64>,
    /// Seeds both backgrounds and streaks; each image uses seed + its index.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "warn"
    } else if cli.verbose {
        "debug"
    } else {
        "info"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = exit::configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Derain(a) => commands::derain(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Synth(a) => commands::synth(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
