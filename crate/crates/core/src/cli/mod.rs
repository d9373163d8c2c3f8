//! Batch front-end: single runs, sweeps and oracle suites with CSV output.

pub mod config;
pub mod output;
pub mod validate;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::sim::{run, MetricsRecord, SimConfig};

pub use config::{load, parse, Cell, RunSpec, SweepAxes, DEFAULT_JOB_CAP, ENV_PREFIX};
pub use validate::{run_suite, Check, Suite};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
    #[error("{0} validation check(s) failed")]
    Validation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Run(_) | CliError::Validation(_) => 1,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Config(_) | crate::Error::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpimap", version, about = "UAV identity-mapping simulator and oracle suites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and print its metrics row.
    Run(RunArgs),
    /// Run the cross product of the [sweep] axes.
    Sweep(SweepArgs),
    /// Run the matcher and filter oracle suites.
    Validate {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Parses `args`, executes and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let spec = spec_from(&args)?;
            cmd_run(&spec)
        }
        Command::Sweep(args) => {
            let spec = spec_from(&args.run)?;
            cmd_sweep(&spec, args.jobs)
        }
        Command::Validate { suite } => cmd_validate(suite, &mut io::stdout()),
    }
}

fn spec_from(args: &RunArgs) -> Result<RunSpec, CliError> {
    let mut spec = load(&args.config, std::env::vars())?;
    if let Some(seed) = args.seed {
        spec.config.seed = seed;
    }
    spec.output = args.output.clone();
    spec.validate()?;
    Ok(spec)
}

fn with_output(spec: &RunSpec, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    match &spec.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush().map_err(|e| CliError::Io(e.to_string()))
        }
        None => body(&mut io::stdout().lock()),
    }
}

/// Runs the base config once.
pub fn cmd_run(spec: &RunSpec) -> Result<(), CliError> {
    let metrics = run_one(&spec.config)?;
    with_output(spec, |w| output::write_runs(w, &[metrics]))
}

fn run_one(cfg: &SimConfig) -> Result<MetricsRecord, CliError> {
    Ok(run(cfg)?.metrics)
}

/// Seed of repetition `rep` of cell `cell` among `n_cells`.
pub fn sweep_seed(base: u64, rep: usize, n_cells: usize, cell: usize) -> u64 {
    base.wrapping_add((rep * n_cells + cell) as u64)
}

/// Every run of the sweep grouped by cell, in cell and repetition order.
pub fn sweep_results(spec: &RunSpec, jobs: usize) -> Result<Vec<Vec<MetricsRecord>>, CliError> {
    let cells = spec.cells();
    let reps = spec.sweep.repetitions;
    let n_cells = cells.len();
    let configs: Vec<SimConfig> = cells
        .iter()
        .flat_map(|cell| {
            (0..reps).map(move |rep| SimConfig {
                seed: sweep_seed(spec.config.seed, rep, n_cells, cell.index),
                log_path: None,
                ..cell.config.clone()
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Run(format!("thread pool: {e}")))?;
    let flat: Vec<MetricsRecord> = pool.install(|| configs.par_iter().map(run_one).collect::<Result<_, _>>())?;
    Ok(flat.chunks(reps).map(<[MetricsRecord]>::to_vec).collect())
}

/// Runs the sweep; without axes and with one repetition this is [`cmd_run`].
pub fn cmd_sweep(spec: &RunSpec, jobs: usize) -> Result<(), CliError> {
    if spec.sweep.is_trivial() {
        return cmd_run(spec);
    }
    let cells = sweep_results(spec, jobs)?;
    with_output(spec, |w| output::write_sweep(w, &cells))
}

/// Prints one line per check; fails when any check fails.
pub fn cmd_validate(suite: Suite, out: &mut dyn Write) -> Result<(), CliError> {
    let checks = run_suite(suite)?;
    for c in &checks {
        writeln!(out, "{c}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    writeln!(out, "{} passed, {failed} failed", checks.len() - failed).map_err(|e| CliError::Io(e.to_string()))?;
    if failed > 0 {
        Err(CliError::Validation(failed))
    } else {
        Ok(())
    }
}
