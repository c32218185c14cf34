//! `dovetail` — simulate and optimize planar interlocking joints.
//!
//! Subcommands: `simulate` runs the alternating contact solve for one
//! design; `grad-check` compares adjoint and finite-difference gradients;
//! `optimize` runs gradient-descent shape optimization per starting
//! design; `sweep-poisson` repeats the optimization across Poisson's
//! ratios; `export-geometry` writes shapes without solving.
//!
//! Each command reads one JSON config (`--config`, defaults apply without
//! it), overrides it from flags, and writes artifacts plus a
//! `manifest.json` into the output directory. A manifest can itself be
//! passed as `--config` to reproduce its run. Exit codes: 0 success, 1
//! I/O failure, 2 invalid config or parameters, 3 solver failure or
//! non-convergence, 4 gradient check over threshold.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{
    cmd_export_geometry, cmd_grad_check, cmd_optimize, cmd_simulate, cmd_sweep_poisson, CliError,
};
use config::{load_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "dovetail",
    version,
    about = "Simulate and optimize planar interlocking joints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration, or a manifest.json from a previous run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the root RNG seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the alternating contact simulation and export fields.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also export the displacement field after every iteration.
        #[arg(long)]
        dump_iterations: bool,
    },
    /// Compare the adjoint gradient of d with finite differences.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Central-difference step in mm.
        #[arg(long, value_name = "F")]
        fd_step: Option<f64>,
        /// Mean relative difference above which the check fails.
        #[arg(long, value_name = "F")]
        threshold: Option<f64>,
    },
    /// Run gradient-descent shape optimization for each starting design.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Worker threads across starting designs.
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Optimize at each Poisson's ratio and compare the best designs.
    SweepPoisson {
        #[command(flatten)]
        common: Common,
        /// Worker threads across (ratio, starting design) pairs.
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Export joint geometry as text and SVG without solving.
    ExportGeometry {
        #[command(flatten)]
        common: Common,
    },
}

/// Load the config file (or defaults) and apply the shared flag overrides.
fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate {
            common,
            dump_iterations,
        } => {
            let mut cfg = base_config(common)?;
            if *dump_iterations {
                cfg.dump_iterations = true;
            }
            cmd_simulate(&cfg.resolve()?)
        }
        Command::GradCheck {
            common,
            fd_step,
            threshold,
        } => {
            let mut cfg = base_config(common)?;
            if let Some(step) = fd_step {
                cfg.grad_check.fd_step = *step;
            }
            if let Some(t) = threshold {
                cfg.grad_check.threshold = *t;
            }
            cmd_grad_check(&cfg.resolve()?)
        }
        Command::Optimize { common, jobs } => {
            let mut cfg = base_config(common)?;
            if let Some(n) = jobs {
                cfg.jobs = *n;
            }
            cmd_optimize(&cfg.resolve()?)
        }
        Command::SweepPoisson { common, jobs } => {
            let mut cfg = base_config(common)?;
            if let Some(n) = jobs {
                cfg.jobs = *n;
            }
            cmd_sweep_poisson(&cfg.resolve()?)
        }
        Command::ExportGeometry { common } => {
            let cfg = base_config(common)?;
            cmd_export_geometry(&cfg.resolve()?)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
