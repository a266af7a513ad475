//! `bubbleid`: batch front-end for scene generation, regressor training,
//! hidden-part reconstruction, fusion, weight maps and evaluation.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::CliError;

#[derive(Debug, Parser)]
#[command(name = "bubbleid", version, about = "Overlapping bubble identification toolkit")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "BUBBLEID_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth.
    Gen(GenArgs),
    /// Train the radial distance correction regressor on generated scenes.
    TrainRdc(TrainArgs),
    /// Reconstruct instance outlines from a label map.
    Reconstruct(ReconstructArgs),
    /// Grow seed instances over a foreground mask.
    Fuse(FuseArgs),
    /// Export the gap-emphasizing loss weight map of a label map.
    Weightmap(WeightmapArgs),
    /// Evaluate predicted label maps against generated scenes.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON generation config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's scene count (per target in alpha mode).
    #[arg(long)]
    pub count: Option<usize>,
    /// Also write a rendered grayscale image per scene.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `gen`.
    #[arg(long)]
    pub scenes: PathBuf,
    /// JSON training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV (default: next to the model).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    None,
    Rdc,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Flagged,
    Full,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Visible instance label map (16-bit PGM).
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Regressor model; required for `--method rdc`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "flagged")]
    pub policy: Policy,
    #[arg(long, default_value_t = 0.05)]
    pub mm_per_px: f64,
    /// JSON-lines output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Seed instance label map (16-bit PGM).
    #[arg(long)]
    pub seeds: PathBuf,
    /// Foreground mask PGM; any nonzero sample is foreground.
    #[arg(long)]
    pub foreground: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics JSON (default: `<out>.json`).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightmapArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Gap distance threshold in px.
    #[arg(long, default_value_t = bubbleid::fuse::DEFAULT_GAP_THRESHOLD)]
    pub threshold: f64,
    /// Binary f32 raster; a JSON sidecar is written to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted visible label maps named `<scene>.labels.pgm`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory written by `gen`.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Regressor model; without it the RDC columns stay empty.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON study config (thresholds, policy, matching, histogram bin width).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::TrainRdc(a) => commands::train_rdc(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Weightmap(a) => commands::weightmap(a),
        Command::Eval(a) => commands::eval(a),
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
