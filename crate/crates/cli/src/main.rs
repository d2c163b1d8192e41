mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use m3d::data::Protocol;
use m3d::evaluation::Variant;

/// Manifold-based domain adaptation with dynamic distribution alignment.
#[derive(Debug, Parser)]
#[command(name = "m3d", version, about)]
struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a dataset between CSV and the binary format.
    Convert(ConvertArgs),
    /// Generate a synthetic domain-shift benchmark.
    Synth(SynthArgs),
    /// Adapt from one source file to one target file.
    Run(RunArgs),
    /// Leave-subject-out evaluation over one dataset.
    Loso(LosoArgs),
    /// Evaluate several ablation variants over shared folds.
    Ablate(LosoArgs),
    /// Mutual-information maps and subject-pair hypothesis tests.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n_per_class: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Mean shift of the target blobs.
    #[arg(long, default_value_t = 3.0)]
    shift: f64,
    /// Rotation of the target domain in radians.
    #[arg(long, default_value_t = 0.4)]
    rotation: f64,
    #[arg(long, default_value_t = 0.8)]
    noise: f64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Write one multi-subject dataset instead of a source/target pair.
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long, default_value_t = 1, requires = "subjects")]
    sessions: usize,
    /// Write the binary format instead of CSV.
    #[arg(long)]
    binary: bool,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Flat TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the output artifacts; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Labeled source dataset (.csv or .bin).
    #[arg(long)]
    source: PathBuf,
    /// Target dataset; its labels, if any, are used for scoring only.
    #[arg(long)]
    target: PathBuf,
    /// Ablation variant to run instead of the full pipeline.
    #[arg(long, default_value = "full")]
    ablate: Variant,
    /// Also write the manifold model to `model.bin`.
    #[arg(long)]
    save_model: bool,
    /// Also write the consensus similarity matrix to `similarity.csv`.
    #[arg(long)]
    similarity: bool,
}

#[derive(Debug, Args)]
struct LosoArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Multi-subject dataset (.csv or .bin).
    #[arg(long)]
    data: PathBuf,
    /// single-session[:<id>], cross-session or ten-fold.
    #[arg(long, default_value = "single-session")]
    protocol: Protocol,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Folds evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Class × feature mutual information against predicted labels.
    Mi(MiArgs),
    /// Pairwise subject tests with false-discovery-rate adjustment.
    Tests(TestsArgs),
}

#[derive(Debug, Args)]
struct MiArgs {
    /// Dataset the predictions refer to.
    #[arg(long)]
    data: PathBuf,
    /// `predictions.csv` written by run, loso or ablate.
    #[arg(long)]
    predictions: PathBuf,
    /// Variant to use when the file holds several; the first by default.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TestsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Feature column to compare; the per-sample feature mean by default.
    #[arg(long)]
    feature: Option<usize>,
    /// Keep only samples of this class.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
