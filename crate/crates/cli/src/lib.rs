//! Command-line front end for the ghost-imaging toolkit.
//!
//! Six verbs cover the pipeline: `simulate` produces three frame-aligned
//! GIS1 stacks, `register` locates the correlated regions between arms,
//! `reconstruct` builds second- or third-order ghost images, `visibility`
//! scores them, `stats` reports speckle statistics, and `render` exports
//! PGM views. Everything downstream of the config seed is deterministic, so
//! an entire pipeline rerun reproduces its output files byte for byte.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use ghostlab_core::frames::Region;

#[derive(Parser, Debug)]
#[command(
    name = "ghostlab",
    about = "Pseudo-thermal speckle simulation and ghost-image reconstruction",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Pipeline configuration file (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Override the config frame count.
    #[arg(long, global = true)]
    pub frames: Option<u32>,

    /// Worker thread cap (default: GHOSTLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<u32>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize the three-arm speckle stacks plus ground truth.
    Simulate,
    /// Find correlated regions; default is the arm1->arm2->arm3 chain.
    Register {
        /// Reference stack path (pair mode).
        #[arg(long = "ref", requires = "probe")]
        reference: Option<PathBuf>,
        /// Probe stack path (pair mode).
        #[arg(long, requires = "reference")]
        probe: Option<PathBuf>,
    },
    /// Reconstruct ghost images from the bucket and reference arms.
    Reconstruct {
        /// Correlation order: 2 or 3.
        #[arg(long)]
        order: u8,
        /// Inline arm1->arm2 displacement "DX,DY" (skips registration.txt).
        #[arg(long)]
        d12: Option<String>,
        /// Inline arm2->arm3 displacement "DX,DY".
        #[arg(long)]
        d23: Option<String>,
    },
    /// Compute the visibility of a reconstructed image.
    Visibility {
        /// Ghost image CSV artifact.
        #[arg(long)]
        image: PathBuf,
    },
    /// Pooled intensity statistics of a stack region.
    Stats {
        /// GIS1 stack to analyze.
        #[arg(long)]
        stack: PathBuf,
        /// Region "X,Y,WIDTH,HEIGHT" (default: full sensor).
        #[arg(long)]
        region: Option<String>,
    },
    /// Render a stack frame or ghost image CSV as a 16-bit PGM.
    Render {
        /// Input artifact (.gis1 or .csv).
        #[arg(long)]
        input: PathBuf,
        /// Frame index for stack inputs.
        #[arg(long, default_value_t = 0)]
        frame: u32,
        /// Output PGM path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn thread_count(cli: &Cli, from_config: Option<u32>) -> Option<u32> {
    cli.threads
        .or_else(|| {
            std::env::var("GHOSTLAB_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or(from_config)
}

fn init_threads(n: Option<u32>) {
    if let Some(n) = n {
        // A later init in the same process is fine; results do not depend
        // on the pool size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global();
    }
}

fn load_config(cli: &Cli) -> Result<config::PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs --config"))?;
    let mut cfg = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = cli.frames {
        cfg.n_frames = frames;
    }
    Ok(cfg)
}

/// Execute a parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(&cli)?;
            init_threads(thread_count(&cli, cfg.threads));
            commands::cmd_simulate(&cfg, &cli.out)
        }
        Command::Register { reference, probe } => {
            let cfg = load_config(&cli)?;
            init_threads(thread_count(&cli, cfg.threads));
            commands::cmd_register(&cfg, &cli.out, reference.as_deref(), probe.as_deref())
        }
        Command::Reconstruct { order, d12, d23 } => {
            let cfg = load_config(&cli)?;
            init_threads(thread_count(&cli, cfg.threads));
            commands::cmd_reconstruct(&cfg, &cli.out, *order, d12.as_deref(), d23.as_deref())
        }
        Command::Visibility { image } => {
            let cfg = load_config(&cli)?;
            init_threads(thread_count(&cli, cfg.threads));
            commands::cmd_visibility(&cfg, image, &cli.out)
        }
        Command::Stats { stack, region } => {
            init_threads(thread_count(&cli, None));
            let region: Option<Region> = region
                .as_deref()
                .map(commands::region_from_flag)
                .transpose()
                .context("--region")?;
            commands::cmd_stats(stack, region, &cli.out)
        }
        Command::Render {
            input,
            frame,
            output,
        } => commands::cmd_render(input, *frame, output),
    }
}
