//! Single-binary pipeline driver. Exit codes: 0 success, 1 usage error,
//! 2 data error, 3 numeric/internal error.

mod commands;
mod metadata;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use anglegraph_core::ExitClass;

#[derive(Parser)]
#[command(
    name = "anglegraph",
    about = "3D object detection on LiDAR point clouds with geometric pair-feature GNN encoders",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config-file plus common override flags shared by most subcommands.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature encoder: euclidean|absolute|relative|angle|angle_relative.
    #[arg(long)]
    encoder: Option<String>,
    /// Graph radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    /// Voxel edge length in meters.
    #[arg(long)]
    voxel_size: Option<f64>,
    /// Run seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 = fully serial).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a data directory and write a dataset manifest with a seeded
    /// train/val split.
    Prepare {
        #[arg(long)]
        data_dir: PathBuf,
        /// Manifest output path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train on the manifest's training frames; writes checkpoint and CSV log.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (model.ckpt, training_log.csv, run_metadata.json).
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run detection over a directory of .bin frames; one detections .jsonl
    /// per frame.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; frames are processed independently.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Score detections against labels; writes the AP report.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Per-stage timing table over all five encoders.
    Bench {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Encode a JSON-lines file of point pairs (golden-vector surface).
    Encode {
        /// Input pairs: {"p_i":[x,y,z],"p_j":[x,y,z],"refl":r} per line.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        encoder: String,
        #[arg(long)]
        out: PathBuf,
        /// Divide angle channels by 180.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        normalize_angles: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("ANGLEGRAPH_LOG", "warn"),
    )
    .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version through this path too
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Prepare { data_dir, out, cfg } => commands::prepare(&data_dir, &out, &cfg),
        Command::Train { data_dir, manifest, out_dir, cfg } => {
            commands::train(&data_dir, &manifest, &out_dir, &cfg)
        }
        Command::Infer { checkpoint, frames, out, threads } => {
            commands::infer(&checkpoint, &frames, &out, threads)
        }
        Command::Eval { detections, labels, out_dir, cfg } => {
            commands::eval(&detections, &labels, &out_dir, &cfg)
        }
        Command::Bench { frames, out_dir, repetitions, cfg } => {
            commands::bench(&frames, &out_dir, repetitions, &cfg)
        }
        Command::Encode { pairs, encoder, out, normalize_angles } => {
            commands::encode(&pairs, &encoder, &out, normalize_angles)
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(match e.exit_class() {
                ExitClass::Usage => 1u8,
                ExitClass::Data => 2,
                ExitClass::Numeric => 3,
            })
        }
    }
}
