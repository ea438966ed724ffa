//! `edgemig` — spec-driven experiment runner for the edge data-migration
//! simulator. See the crate README for the spec schema and artifact layout.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use edgemig_cli::{runner, spec::ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "edgemig",
    version,
    about = "Run, compare, and synthesize edge data-migration experiments from a TOML spec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every grid cell × seed; write event logs, summary tables,
    /// and a reproduction manifest.
    Run(RunArgs),
    /// Per cell, run the Model and replay the same workload under
    /// Random-DM and DBSCAN-DM calibrated to the Model's migration budget;
    /// additionally export per-metric plot data.
    Compare(RunArgs),
    /// Generate the spec's synthetic workload and emit it as the three CSV
    /// trace files.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML), or the manifest.json of a previous
    /// invocation to reproduce it.
    spec: PathBuf,
    /// Replace the spec's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent grid-cell workers (default: one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides the spec's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Experiment spec (TOML) with a `[workload.synthetic]` section.
    spec: PathBuf,
    /// Workload seed (default: the first entry of the spec's seed list).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the spec's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            spec.output = out.clone();
        }
        Ok(spec)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => runner::run(&args.load()?, args.workers),
        Command::Compare(args) => runner::compare(&args.load()?, args.workers),
        Command::Synth(args) => {
            let mut spec = ExperimentSpec::load(&args.spec)?;
            if let Some(out) = &args.out {
                spec.output = out.clone();
            }
            runner::synth(&spec, args.seed)
        }
    }
}
