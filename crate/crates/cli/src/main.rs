//! Command-line entry point.
//!
//! Every subcommand reads an optional JSON config (`--config`) and applies
//! flag overrides on top; flags win. Exit codes: 0 success, 2 bad
//! arguments, 3 data error, 4 runtime error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sketch2statue", version, about = "Statue reconstruction from a single sketch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render turntable views of every mesh and write the training dataset.
    GenData(GenDataArgs),
    /// Turn an image into a line drawing.
    Sketchify(SketchifyArgs),
    /// Train the network on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out statues.
    Eval(EvalArgs),
    /// Predict RGB, depth, normals and mask for a sketch.
    Infer(InferArgs),
    /// Reconstruct a point cloud from a sketch and export it as PLY.
    Reconstruct(ReconstructArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output dataset directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Mesh files (OBJ or PLY); replaces the config's list.
    #[arg(long, num_args = 1..)]
    pub meshes: Option<Vec<PathBuf>>,
    /// Number of procedural placeholder statues to add.
    #[arg(long)]
    pub placeholders: Option<usize>,
    /// Views per statue.
    #[arg(long)]
    pub views: Option<usize>,
    /// Image resolution in pixels.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Camera elevation in degrees.
    #[arg(long)]
    pub elevation: Option<f64>,
    /// Worker threads for rendering (default: number of processors).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Print the plan (statue and sample counts) without rendering.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Canny,
    Dog,
    Laplacian,
}

#[derive(Debug, Args)]
pub struct SketchifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input image.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Filter to apply.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Canny low threshold.
    #[arg(long)]
    pub low: Option<f64>,
    /// Canny high threshold.
    #[arg(long)]
    pub high: Option<f64>,
    /// Gaussian sigma (Canny and DoG).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// DoG scale ratio.
    #[arg(long)]
    pub k: Option<f64>,
    /// DoG or Laplacian response threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// External translator command with `{in}` and `{out}` placeholders;
    /// replaces the built-in filters.
    #[arg(long)]
    pub external: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for checkpoints and logs.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Checkpoint to resume from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Last optimizer step to run.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Samples per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Samples of RGB-only warm-up.
    #[arg(long)]
    pub warmup_samples: Option<u64>,
    /// Steps between checkpoints.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Train/validation/test fractions, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split_fractions: Option<Vec<f64>>,
    /// Explicit training statue ids (overrides the fraction split).
    #[arg(long, value_delimiter = ',')]
    pub train_statues: Option<Vec<u32>>,
    /// Explicit validation statue ids.
    #[arg(long, value_delimiter = ',')]
    pub val_statues: Option<Vec<u32>>,
    /// Explicit test statue ids.
    #[arg(long, value_delimiter = ',')]
    pub test_statues: Option<Vec<u32>>,
    /// Disable the rayon data-parallel batch loop.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Statue ids to evaluate.
    #[arg(long, value_delimiter = ',')]
    pub statues: Option<Vec<u32>>,
    /// Split file written by `train` (split.json) to draw statues from.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Which subset of the split file to evaluate.
    #[arg(long, value_enum)]
    pub subset: Option<Subset>,
    /// Views per statue (default: all).
    #[arg(long)]
    pub views_per_statue: Option<usize>,
    /// Permit statues the checkpoint was trained on.
    #[arg(long)]
    pub allow_training_statues: bool,
    /// Write the report JSON here as well as to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sketch image (any size; padded to square with white).
    #[arg(long)]
    pub sketch: Option<PathBuf>,
    /// Directory for rgb/depth/normals/mask PNGs.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a sketch|rgb|depth|normals|mask panel.
    #[arg(long)]
    pub panel: bool,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sketch image.
    #[arg(long)]
    pub sketch: Option<PathBuf>,
    /// Output PLY file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Mask probability threshold, clamped to [0, 1].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Camera azimuth in degrees.
    #[arg(long)]
    pub azimuth: Option<f64>,
    /// Camera elevation in degrees.
    #[arg(long)]
    pub elevation: Option<f64>,
    /// Also write a diagnostic panel next to the PLY.
    #[arg(long)]
    pub panel: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::GenData(a) => ("gen-data", commands::gen_data(a)),
        Command::Sketchify(a) => ("sketchify", commands::sketchify(a)),
        Command::Train(a) => ("train", commands::train(a)),
        Command::Eval(a) => ("eval", commands::eval(a)),
        Command::Infer(a) => ("infer", commands::infer(a)),
        Command::Reconstruct(a) => ("reconstruct", commands::reconstruct(a)),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, kind) = commands::classify(&e);
            let report = serde_json::json!({ "command": name, "error": kind, "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}
