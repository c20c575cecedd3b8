//! `seldkit` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seldkit::FeatureKind;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "seldkit",
    version,
    about = "SELD feature extraction, augmentation, simulation and scoring"
)]
struct Cli {
    /// Worker threads for data-parallel loops; SELD_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract feature files from a WAV clip or a directory of clips.
    Extract(ExtractArgs),
    /// Time all four feature pipelines on one clip and print a JSON report.
    Bench(BenchArgs),
    /// Render a scene file to WAV audio and an annotation CSV.
    Simulate(SimulateArgs),
    /// Apply a channel swap, mask or frequency shift to a feature file.
    Augment(AugmentArgs),
    /// Score a prediction CSV against a reference CSV.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// WAV file or directory of WAV files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    feature: FeatureKind,
    /// Array geometry TOML; defaults to the tetrahedral TNSSE array.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with FeatureConfig field overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stop at the first failing clip.
    #[arg(long)]
    fail_fast: bool,
    #[arg(long)]
    spec_cutoff_hz: Option<f64>,
    #[arg(long)]
    spatial_low_hz: Option<f64>,
    #[arg(long)]
    spatial_high_hz: Option<f64>,
    #[arg(long)]
    mel_bands: Option<usize>,
    #[arg(long)]
    use_magnitude_test: Option<bool>,
    #[arg(long)]
    use_coherence_test: Option<bool>,
    #[arg(long)]
    coherence_threshold: Option<f64>,
    #[arg(long)]
    speed_of_sound: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Four-channel WAV clip; a synthetic clip is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(3..))]
    repeats: u64,
    /// Length of the synthetic clip in seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    geometry: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output stem: writes `<out>.wav` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AugmentOp {
    Swap,
    Mask,
    Shift,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MaskModeArg {
    Rect,
    Cross,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    op: AugmentOp,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Swap: index into the derived swap table (drawn from the seed if absent).
    #[arg(long)]
    transform: Option<usize>,
    /// Swap: annotation CSV to remap alongside the features.
    #[arg(long, requires = "labels_out")]
    labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    n_classes: usize,
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Shift: bins, at most 10 either way (drawn from the seed if absent).
    #[arg(long, allow_hyphen_values = true)]
    amount: Option<i32>,
    #[arg(long, value_enum, default_value_t = MaskModeArg::Rect)]
    mask_mode: MaskModeArg,
    /// Mask: frames (drawn up to 10% of the axis if absent).
    #[arg(long)]
    time_span: Option<usize>,
    /// Mask: bins (drawn up to 10% of the axis if absent).
    #[arg(long)]
    freq_span: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    fill: f32,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 12)]
    n_classes: usize,
}

fn parse_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse::<FeatureKind>().map_err(|e| e.to_string())
}

/// SELD_THREADS overrides the flag; an unparsable value is a usage error.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var("SELD_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("SELD_THREADS must be a positive integer, got `{v}`")),
        _ => match flag {
            Some(0) => Err("--threads must be positive".into()),
            other => Ok(other),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }

    let result = match cli.command {
        Command::Extract(args) => commands::extract(args),
        Command::Bench(args) => commands::bench(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Augment(args) => commands::augment(args),
        Command::Evaluate(args) => commands::evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(commands::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
