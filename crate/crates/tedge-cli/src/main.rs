//! `tedge` — experiment runner for the edge-caching benchmark.
//!
//! Usage: `tedge <stage> --config <path> [--seed N] [--out DIR] [--set k=v]`
//! with stages gen-topology, gen-trace, ingest, prepare, train, eval,
//! simulate and report. Artifacts land under `--out` with fixed names so
//! stages can find their upstream inputs.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

use crate::config::ExperimentConfig;
use crate::stages::{run_stage, Stage, StageContext};

#[derive(Parser, Debug)]
#[command(name = "tedge", about = "Trace-driven edge-caching benchmark pipeline")]
struct Args {
    /// Stage to run.
    #[arg(value_enum)]
    stage: Stage,

    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Seed override for the stage (falls back to TEDGE_SEED, then to the
    /// per-section seeds in the config).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for artifacts and manifests.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Individual config overrides, e.g. --set training.lr=0.01
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let config = ExperimentConfig::load(&args.config, &args.overrides)?;
    let seed_override = match args.seed {
        Some(seed) => Some(seed),
        None => std::env::var("TEDGE_SEED")
            .ok()
            .map(|v| v.parse::<u64>().context("TEDGE_SEED must be an integer"))
            .transpose()?,
    };
    eprintln!(
        "stage {} (config {}, out {}, seed override {:?})",
        args.stage.name(),
        args.config.display(),
        args.out.display(),
        seed_override
    );
    let ctx = StageContext {
        config,
        config_path: args.config,
        out_dir: args.out,
        seed_override,
    };
    run_stage(args.stage, &ctx)
}
