//! `volpot2d run|study <config.json>`: batch driver for the volume
//! potential solver.

mod config;
mod driver;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;
use driver::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "volpot2d", version, about = "High-order volume potential solver for planar domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at one gridsize and write the solution grid and statistics.
    Run(Opts),
    /// Solve at a decreasing list of gridsizes and fit convergence orders.
    Study(Opts),
}

#[derive(Args)]
struct Opts {
    /// JSON run configuration.
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the tessellation in text form.
    #[arg(long)]
    dump_mesh: bool,
    /// Also write the singular and near-singular quadrature tables.
    #[arg(long)]
    dump_tables: bool,
    /// Worker threads; falls back to the config, then VOLPOT2D_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Fast summation tolerance; overrides the config.
    #[arg(long)]
    epsilon: Option<f64>,
}

fn execute(study: bool, opts: Opts) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(&opts.config)?;
    if opts.epsilon.is_some() {
        cfg.epsilon = opts.epsilon;
    }
    if opts.threads.is_some() {
        cfg.threads = opts.threads;
    }
    if cfg.threads.is_none() {
        if let Ok(v) = std::env::var("VOLPOT2D_THREADS") {
            let n = v.trim().parse().map_err(|_| CliError::Config(format!("VOLPOT2D_THREADS={v:?} is not a count")))?;
            cfg.threads = Some(n);
        }
    }
    cfg.validate(study)?;
    let set =
        Settings { epsilon: cfg.epsilon.unwrap_or(1e-12), dump_mesh: opts.dump_mesh, dump_tables: opts.dump_tables };
    let out = opts.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let (files, summary) = volpot2d::par::with_threads(cfg.threads, || {
        if study {
            driver::study(&cfg, &set)
        } else {
            driver::run(&cfg, &set)
        }
    })?;
    driver::write_all(&out, &files)?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(o) => execute(false, o),
        Command::Study(o) => execute(true, o),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("volpot2d: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
