//! `hnsc`: encode genus-zero meshes into compact neural containers, decode
//! them at any icosphere level, and measure reconstruction error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hnsc", version, about)]
pub struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Increase log verbosity (-v info, -vv debug). Logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress an OBJ/PLY mesh into a .hnsc container.
    Encode(EncodeArgs),
    /// Reconstruct a mesh from a container.
    Decode(DecodeArgs),
    /// Compare a reconstruction against a reference mesh.
    Eval(EvalArgs),
    /// Print a container's architectures and sizes.
    Info(InfoArgs),
}

#[derive(Debug, clap::Args)]
pub struct EncodeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// TOML training configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// 50KB, 85KB, 165KB or 260KB.
    #[arg(long)]
    pub preset: Option<String>,
    /// Custom fine architecture: hidden layers.
    #[arg(long, requires = "hidden_width")]
    pub hidden_layers: Option<usize>,
    /// Custom fine architecture: hidden width.
    #[arg(long, requires = "hidden_layers")]
    pub hidden_width: Option<usize>,
    /// Positional-encoding levels of the fine network.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub coarse_iterations: Option<usize>,
    #[arg(long)]
    pub fine_iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Laplacian smoothing iterations for the coarse target.
    #[arg(long)]
    pub smoothing_iterations: Option<usize>,
    #[arg(long)]
    pub smoothing_lambda: Option<f64>,
    /// Store fp32 parameters instead of fp16.
    #[arg(long)]
    pub no_quantize: bool,
    /// Sphere mesh (same connectivity as the input) to use instead of the
    /// built-in parameterizer.
    #[arg(long)]
    pub import_sphere: Option<PathBuf>,
    /// Write progress records here instead of standard output.
    #[arg(long)]
    pub progress: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct DecodeArgs {
    pub model: PathBuf,
    /// Output mesh; format from the extension (.obj or .ply).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Icosphere subdivision level.
    #[arg(short = 'k', long, default_value_t = 6)]
    pub level: usize,
    /// Split template faces the coarse map stretches beyond the threshold.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 4.0)]
    pub ratio_threshold: f64,
    #[arg(long, default_value_t = 3)]
    pub max_rounds: usize,
    /// Skip the fine displacement network.
    #[arg(long)]
    pub coarse_only: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DirectionArg {
    Symmetric,
    ReconToRef,
    RefToRecon,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    pub recon: PathBuf,
    pub reference: PathBuf,
    #[arg(short = 'n', long, default_value_t = hnsc::metrics::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DirectionArg::Symmetric)]
    pub direction: DirectionArg,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct InfoArgs {
    pub model: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
