//! `icelut`: train, bake, retouch, verify, bench, metrics, and synth.
//!
//! Exit codes: 0 ok, 2 configuration, 3 dataset, 4 checkpoint, 5 bundle,
//! 6 verification failure, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

pub mod exit {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATASET: u8 = 3;
    pub const CHECKPOINT: u8 = 4;
    pub const BUNDLE: u8 = 5;
    pub const VERIFY: u8 = 6;
}

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait OrExit<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

pub fn fail<T>(code: u8, msg: impl std::fmt::Display) -> Result<T, Failure> {
    Err(Failure {
        code,
        error: anyhow::anyhow!("{msg}"),
    })
}

#[derive(Parser)]
#[command(name = "icelut", version, about = "Image retouching that runs as pure table lookups")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for training and dataset synthesis.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on paired images and write a checkpoint.
    Train(TrainArgs),
    /// Convert a checkpoint into a LUT bundle.
    Bake(BakeArgs),
    /// Apply a bundle to every image in a directory.
    Retouch(RetouchArgs),
    /// Check that a bundle reproduces its checkpoint within the quantization bound.
    Verify(VerifyArgs),
    /// Time the table path, optionally against the network path.
    Bench(BenchArgs),
    /// PSNR, SSIM, and color difference between two images or two directories.
    Metrics(MetricsArgs),
    /// Generate a paired synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset root holding `input/` and `target/`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Loss-history CSV; defaults to the checkpoint path with a `.loss.csv` suffix.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Side of the working image used during training.
    #[arg(long)]
    pub train_resolution: Option<usize>,
    /// Branch hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// First-layer kernel side; only 1 can be baked.
    #[arg(long)]
    pub first_kernel: Option<usize>,
}

#[derive(Args)]
pub struct BakeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Sampling interval of pooled features.
    #[arg(long)]
    pub delta_s: Option<f64>,
    /// Clamp range of pooled features.
    #[arg(long)]
    pub offset: Option<f64>,
    /// Print the storage report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct RetouchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Directory of input images.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for outputs (created if missing).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Directory of same-named reference images; enables metrics.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Metrics CSV path; defaults to `<out>/metrics.csv` when targets are given.
    #[arg(long)]
    pub metrics_csv: Option<PathBuf>,
    #[arg(long)]
    pub working_size: Option<usize>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Directory of probe images.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub working_size: Option<usize>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub working_size: Option<usize>,
    /// Also time the network weight stage of this checkpoint.
    #[arg(long)]
    pub compare_checkpoint: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Image file or directory.
    pub a: PathBuf,
    /// Reference image file or directory.
    pub b: PathBuf,
    /// For directories: per-image CSV path (stdout summary is always JSON).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Dataset root to create.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    /// gamma:<g>, channel-mix, warm-tone, channel-swap, or exposure, joined by `+`.
    #[arg(long)]
    pub transform: Option<String>,
    /// Uniform per-sample grain amplitude in [0, 1).
    #[arg(long)]
    pub grain: Option<f64>,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ICELUT_THREADS") else {
        return Ok(());
    };
    let threads: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return fail(exit::CONFIG, format!("ICELUT_THREADS must be a positive integer, got `{value}`")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .or_exit(exit::OTHER)
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => config::RunConfig::load(path).or_exit(exit::CONFIG)?,
        None => config::RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a, cfg),
        Command::Bake(a) => commands::bake(&a, cfg),
        Command::Retouch(a) => commands::retouch(&a, cfg),
        Command::Verify(a) => commands::verify(&a, cfg),
        Command::Bench(a) => commands::bench(&a, cfg),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Synth(a) => commands::synth(&a, cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
