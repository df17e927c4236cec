//! `fdpl` command-line front end: corpus preparation, difference matrix,
//! training, evaluation and single-image super-resolution.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fdpl::{DiffMode, LossKind, Reduction};

/// Input or usage problem; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Tags library errors raised while reading user-supplied inputs.
pub trait InputContext<T> {
    fn input(self) -> anyhow::Result<T>;
}

impl<T> InputContext<T> for fdpl::Result<T> {
    fn input(self) -> anyhow::Result<T> {
        self.map_err(|e| usage(e.to_string()))
    }
}

#[derive(Parser, Debug)]
#[command(name = "fdpl", version, about = "Frequency-domain perceptual loss super-resolution toolkit")]
struct Cli {
    /// Run configuration file of `key = value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade a folder of PNGs and cut aligned 32x32 training patches.
    Prepare(PrepareArgs),
    /// Compute the mean relative DCT difference matrix of a folder of PNGs.
    DiffMatrix(DiffMatrixArgs),
    /// Train an SRCNN on a prepared corpus.
    Train(TrainArgs),
    /// Score a checkpoint (or the bicubic baseline) on a folder of PNGs.
    Eval(EvalArgs),
    /// Upscale one image with a trained checkpoint.
    Sr(SrArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct DegradeArgs {
    /// Upscaling factor.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Standard deviation of the blur applied between down- and upsampling.
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    /// Blur kernel radius in pixels.
    #[arg(long)]
    pub blur_radius: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Folder of ground-truth PNG images.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output folder for the patch file and manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Recorded in the manifest for provenance.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub degrade: DegradeArgs,
}

#[derive(Args, Debug)]
pub struct DiffMatrixArgs {
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output text file (8 rows of 8 values).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Guard added to |C_gt| in the denominator.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// How tiles are combined: pooled or per-tile.
    #[arg(long)]
    pub mode: Option<DiffMode>,
    #[command(flatten)]
    pub degrade: DegradeArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus folder written by `prepare`.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Output folder for model.srcnn, checkpoints and metrics.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// mse, fdpl or fdpl-at.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Difference matrix file; required for fdpl and fdpl-at.
    #[arg(long, value_name = "PATH")]
    pub diff_matrix: Option<PathBuf>,
    /// Folder of PNGs scored during training.
    #[arg(long, value_name = "DIR")]
    pub eval_dir: Option<PathBuf>,
    /// Evaluate every N steps (0: only at the end).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Write checkpoint_N.srcnn every N steps (0: never).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Per-patch objective the optimizer descends: sum or mean.
    #[arg(long)]
    pub reduction: Option<Reduction>,
    /// Degradation used for the eval set; defaults to the corpus settings.
    #[command(flatten)]
    pub degrade: DegradeArgs,
}

#[derive(Args, Debug)]
#[group(id = "model", required = true, multiple = false, args = ["checkpoint", "baseline"])]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Score the degraded input itself (bicubic row).
    #[arg(long)]
    pub baseline: bool,
    /// Folder of ground-truth PNG images.
    #[arg(long, value_name = "DIR")]
    pub set: Option<PathBuf>,
    /// Also write the report as CSV.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub degrade: DegradeArgs,
}

#[derive(Args, Debug)]
pub struct SrArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub input: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub output: PathBuf,
    #[arg(long)]
    pub scale: Option<usize>,
    /// Also write the plain bicubic upscale next to the output.
    #[arg(long)]
    pub compare: bool,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("FDPL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("FDPL_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(path) => config::ConfigFile::load(path)?,
        None => config::ConfigFile::default(),
    };
    match cli.command {
        Command::Prepare(a) => commands::prepare(a, &cfg),
        Command::DiffMatrix(a) => commands::diff_matrix(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Sr(a) => commands::sr(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fdpl: error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
