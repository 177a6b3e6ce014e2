//! Command-line driver for the spectrabench phases.
//!
//! ```text
//! spectrabench phase1 --config run.toml --out results/
//! spectrabench phase2 --config run.toml --out results/ --select-on validation
//! ```
//!
//! Each phase writes `<phase>.json`, one CSV per table and
//! `<phase>_timings.json` into the output directory. Later phases read the
//! reports of earlier ones from the same directory.

pub mod cache;
pub mod config;
pub mod context;
pub mod error;
pub mod phases;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::config::{RunConfig, SelectOn};
use crate::context::{Context, Options};
use crate::error::CliResult;
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Phase1,
    Phase2,
    Phase3,
    Phase4,
    Phase5,
    Phase6,
    Bands,
    Synth,
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "spectrabench", version, about = "Hyperspectral fruit ripeness benchmark")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = "results")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated model names; overrides the configured list.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Reuse fitted pipelines and studies cached in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Where phase 2 selects its preprocessing.
    #[arg(long, value_enum)]
    pub select_on: Option<SelectOn>,
    /// Also write a Markdown summary.
    #[arg(long)]
    pub markdown: bool,
}

/// Runs one phase on a prepared context.
pub fn run_phase(ctx: &Context, command: Command) -> CliResult<Report> {
    match command {
        Command::Phase1 => phases::phase1(ctx),
        Command::Phase2 => phases::phase2(ctx),
        Command::Phase3 => phases::phase3(ctx),
        Command::Phase4 => phases::phase4(ctx),
        Command::Phase5 => phases::phase5(ctx),
        Command::Phase6 => phases::phase6(ctx),
        Command::Bands => phases::bands(ctx),
        Command::Synth => phases::synth(ctx),
        Command::Validate => phases::validate(ctx),
    }
}

/// Loads the config, applies command-line overrides, runs and writes.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(models) = &cli.models {
        cfg.models = Some(models.clone());
    }
    if let Some(on) = cli.select_on {
        cfg.phase2.select_on = on;
    }
    let ctx = Context::new(cfg, &Options { out: cli.out.clone(), resume: cli.resume, markdown: cli.markdown })?;
    let report = run_phase(&ctx, cli.command)?;
    log::info!("{} finished", report.phase);
    ctx.write(&report)
}

/// Sizes the global thread pool from `SPECTRABENCH_THREADS` when set.
pub fn init_threads() {
    if let Some(n) = std::env::var("SPECTRABENCH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
}
