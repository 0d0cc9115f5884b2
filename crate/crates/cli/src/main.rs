use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use pdkl_cli::{run_stage, PipelineConfig, Stage};

/// Learn peridynamic micro-modulus kernels from coarse-grained FEM data.
#[derive(Debug, Parser)]
#[command(name = "pdkl", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the artifacts of earlier stages; defaults to the
    /// output directory.
    #[arg(long)]
    stage_input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Coarsen,
    Fit,
    Predict,
    Report,
    Pipeline,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Stage {
        match c {
            Command::Simulate => Stage::Simulate,
            Command::Coarsen => Stage::Coarsen,
            Command::Fit => Stage::Fit,
            Command::Predict => Stage::Predict,
            Command::Report => Stage::Report,
            Command::Pipeline => Stage::Pipeline,
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PDKL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("PDKL_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let config = PipelineConfig::load(&cli.config)?;
    let out = cli
        .out
        .or_else(|| config.output_dir.clone())
        .context("no output directory: pass --out or set output_dir in the config")?;
    run_stage(cli.command.into(), &config, &out, cli.stage_input.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("pdkl: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
