use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Tracking by detection queries: synthetic data, training, tracking and evaluation.
#[derive(Debug, Parser)]
#[command(name = "tbdq", version)]
pub struct Cli {
    /// Overrides the config seed; every random draw derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic sequences (gt.txt, det.txt, det.json per sequence).
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of sequences; overrides the config.
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// Train the associator on every sequence under a data directory.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Track one sequence directory and write MOT results.
    Track {
        #[command(flatten)]
        config: ConfigArg,
        /// Sequence directory holding det.txt and det.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Required unless --greedy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use the IoU-only baseline instead of the learned associator.
        #[arg(long)]
        greedy: bool,
        /// Write head-averaged interaction weights as CSV.
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Score results against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// Write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write per-threshold HOTA terms as CSV.
        #[arg(long)]
        per_alpha: Option<PathBuf>,
    },
    /// Score two result files side by side.
    Compare {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "A")]
        label_a: String,
        #[arg(long, default_value = "B")]
        label_b: String,
    },
    /// Render per-frame box overlays and attention heatmaps as PNG.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        attention: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1280)]
        width: u32,
        #[arg(long, default_value_t = 720)]
        height: u32,
        /// Only the first N frames.
        #[arg(long)]
        max_frames: Option<usize>,
    },
}
