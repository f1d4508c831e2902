use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zsar::eval::Side;
use zsar::ErrorKind;

mod commands;

/// Zero-shot action recognition on precomputed embeddings.
#[derive(Debug, Parser)]
#[command(name = "zsar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Load a manifest and print dataset statistics.
    Ingest(IngestArgs),
    /// Write seen/unseen class splits.
    Split(SplitArgs),
    /// Fit the projections on a split's seen classes.
    Train(TrainArgs),
    /// Score a trained model on one side of a split.
    Eval(EvalArgs),
    /// Aggregate evaluation reports into a mean ± std table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub videos_per_class: usize,
    #[arg(long, default_value_t = 5)]
    pub descs_per_class: usize,
    #[arg(long, default_value_t = 4)]
    pub clips_per_video: usize,
    #[arg(long, default_value_t = 8)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub visual_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub text_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; receives manifest.json, tensors/ and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Print an explicit verdict line after the statistics.
    #[arg(long)]
    pub validate: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub unseen_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Validate and copy existing split files instead of drawing new ones.
    #[arg(long = "import", value_name = "FILE")]
    pub imports: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// `key = value` hyperparameter file; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "unseen")]
    pub side: Side,
    #[arg(long)]
    pub out_report: PathBuf,
    #[arg(long)]
    pub per_class_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Glob matching report JSON files, e.g. `runs/*/report.json`.
    #[arg(long)]
    pub reports: String,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<zsar::Error>())
        .map(zsar::Error::kind);
    match kind {
        Some(ErrorKind::Io) => 2,
        Some(ErrorKind::Numerical) => 3,
        Some(ErrorKind::Validation) | None => 1,
    }
}

/// Context layers down to the first library error, whose message already
/// includes its own causes.
fn message(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in err.chain() {
        parts.push(cause.to_string());
        if cause.is::<zsar::Error>() {
            break;
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
