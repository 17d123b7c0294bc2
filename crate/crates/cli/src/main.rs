#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod scene;

use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tetmorph", version, about = "Deform, render and fit radiance fields inside tetrahedral cages")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write zeros for wall-clock columns so every output is byte-stable.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render frames of a scene from one or more cameras.
    Render {
        #[arg(long)]
        config: PathBuf,
        /// Camera JSON files (added to those in the config).
        #[arg(long = "camera")]
        cameras: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Half-open frame range `A..B`.
        #[arg(long, value_parser = parse_range)]
        frames: Option<Range<u64>>,
        /// Also write raw float buffers.
        #[arg(long)]
        f32: bool,
    },
    /// Fit a voxel field to posed images.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path (overrides the manifest).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Loss trace CSV path (overrides the manifest).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Iteration count (overrides the manifest).
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// PSNR of rendered images against references with the same file names.
    Metrics {
        rendered: PathBuf,
        reference: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the region and barycentric coordinates of points.
    Locate {
        #[arg(long)]
        config: PathBuf,
        /// Text file with one `x y z` point per line.
        #[arg(long)]
        points: PathBuf,
        /// Frame whose deformed state is queried (default: rest).
        #[arg(long)]
        frame: Option<u64>,
        /// Compare against exhaustive search; exit non-zero on disagreement.
        #[arg(long)]
        oracle: bool,
    },
    /// Pose a rig for each parameter row and write vertex frames.
    Pose {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_range)]
        frames: Option<Range<u64>>,
    },
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start '{a}'"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end '{b}'"))?;
    if b < a {
        return Err("range end before start".into());
    }
    Ok(a..b)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Render {
            config,
            cameras,
            out,
            frames,
            f32,
        } => commands::render(g, &config, &cameras, &out, frames, f32).map(|_| true),
        Command::Fit {
            config,
            output,
            trace,
            iterations,
        } => commands::fit(g, &config, output, trace, iterations).map(|_| true),
        Command::Metrics { rendered, reference, out } => commands::metrics(&rendered, &reference, out.as_deref()).map(|_| true),
        Command::Locate {
            config,
            points,
            frame,
            oracle,
        } => commands::locate(g, &config, &points, frame, oracle),
        Command::Pose { rig, params, out, frames } => commands::pose(&rig, &params, &out, frames).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
