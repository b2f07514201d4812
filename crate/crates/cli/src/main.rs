//! `floodrefine`: dataset generation, training, inference, evaluation and
//! the benchmark tables from one binary.

mod commands;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

// Training frees and reallocates tens of megabytes per step; the system
// allocator hands those pages back to the kernel every time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "floodrefine", version, about = "Coarse-to-fine flood segmentation with crowdsourced boundary points")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset and its manifest.
    Gen(GenArgs),
    /// Train one UNet or refiner.
    Train(TrainArgs),
    /// Predict one tile with a checkpoint.
    Infer(InferArgs),
    /// Evaluate a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Annotation-granularity table (label kind × points).
    Benchmark(BenchArgs),
    /// Point dispersion × GPS noise table.
    Ablate(BenchArgs),
    /// Published values next to any saved run summaries.
    Report(ReportArgs),
    /// Finite-difference check of every operator and a small refiner.
    Gradcheck(GradArgs),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// key=value file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Total tiles, train and test together.
    #[arg(long)]
    pub tiles: Option<usize>,
    /// Tiles held out for testing (default: a fifth of --tiles).
    #[arg(long)]
    pub test_tiles: Option<usize>,
    /// Tile side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coarsening blur sigma in pixels.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Coarsening threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// tdc, sm or all.
    #[arg(long)]
    pub scenario: Option<String>,
    /// none, low, high or both.
    #[arg(long)]
    pub noise: Option<String>,
    /// Override the noise radius in meters.
    #[arg(long)]
    pub noise_radius: Option<f64>,
    /// Points per tile, 20 to 50.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Social-media clusters per tile.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Social-media cluster spread in pixels.
    #[arg(long)]
    pub cluster_sigma: Option<f64>,
    /// Point stamp side in pixels.
    #[arg(long)]
    pub stamp: Option<usize>,
    /// Target water fraction.
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub texture: Option<f64>,
}

/// Optimisation and architecture settings shared by train/benchmark/ablate.
#[derive(Args, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, visible_alias = "lr")]
    pub learning_rate: Option<f64>,
    /// constant or cosine.
    #[arg(long)]
    pub lr_schedule: Option<String>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// sequential or joint.
    #[arg(long)]
    pub schedule: Option<String>,
    /// BCE weight of water pixels.
    #[arg(long)]
    pub weight_pos: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Test tiles used for per-epoch monitoring.
    #[arg(long)]
    pub val_tiles: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// unet or refiner.
    #[arg(long)]
    pub model: Option<String>,
    /// coarse or fine.
    #[arg(long)]
    pub labels: Option<String>,
    /// Point scenario tag, or none.
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Multispectral S2C tile.
    #[arg(long)]
    pub tile: Option<PathBuf>,
    /// Binary S2C point raster, for point-conditioned models.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// train or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Point scenario tag (default: the one the model was trained with).
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Existing manifest; without it the standard dataset is generated under --out.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Seed of the generated dataset.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Comma-separated training seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Point scenario of the granularity table (benchmark only).
    #[arg(long)]
    pub points: Option<String>,
    /// Test tiles exported as panels (benchmark only).
    #[arg(long)]
    pub panels: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run summaries written by benchmark or ablate.
    pub summaries: Vec<PathBuf>,
}

#[derive(Args)]
pub struct GradArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum coordinates probed per check.
    #[arg(long)]
    pub coords: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Side of the network check input.
    #[arg(long)]
    pub size: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen(a) => commands::gen(&a),
        Cmd::Train(a) => commands::train(&a),
        Cmd::Infer(a) => commands::infer(&a),
        Cmd::Eval(a) => commands::eval(&a),
        Cmd::Benchmark(a) => commands::benchmark(&a, false),
        Cmd::Ablate(a) => commands::benchmark(&a, true),
        Cmd::Report(a) => commands::report(&a),
        Cmd::Gradcheck(a) => commands::gradcheck(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("floodrefine: error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
