//! Argument parsing and the `run` entry point with its exit-code contract:
//! 0 when every judged row passes, 1 on a tolerance failure, 2 on invalid
//! configuration (including an undefined ratio), 3 on solver or I/O errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::experiments;
use crate::report::{all_pass, write_csv, ReportRow};

#[derive(Debug, Parser)]
#[command(name = "stokes-harness", version, about = "Verification suites and estimate sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CSV output path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `experiment.resolutions`, e.g. `16,32,64`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub resolution_override: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ratio of circumradius to star radius of the configured domain.
    Ratio,
    /// Divergence and commutator identities of the Bogovskii operator.
    BogovskiiVerify,
    /// Leray projector checks on seeded periodic fields.
    HelmholtzVerify,
    /// Manufactured convergence and pressure harmonicity of the solver.
    StokesRun,
    /// Flattening identities, Hessian recovery and localized system checks.
    TransformVerify,
    /// Pressure estimate ratios under grid refinement.
    EstimateSweep,
}

impl Command {
    pub fn execute(self, cfg: &Config) -> Result<Vec<ReportRow>> {
        match self {
            Command::Ratio => experiments::ratio(cfg),
            Command::BogovskiiVerify => experiments::bogovskii_verify(cfg),
            Command::HelmholtzVerify => experiments::helmholtz_verify(cfg),
            Command::StokesRun => experiments::stokes_run(cfg),
            Command::TransformVerify => experiments::transform_verify(cfg),
            Command::EstimateSweep => experiments::estimate_sweep(cfg),
        }
    }
}

/// Reads the configuration and applies the command-line overrides.
pub fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = Some(seed);
    }
    if let Some(r) = &cli.resolution_override {
        cfg.experiment.resolutions = Some(r.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cli: &Cli, rows: &[ReportRow]) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_csv(&mut w, rows)?;
            w.flush()?;
        }
        None => write_csv(&mut io::stdout().lock(), rows)?,
    }
    Ok(())
}

/// Runs the selected subcommand and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = load_config(cli).and_then(|cfg| {
        let rows = cli.command.execute(&cfg)?;
        emit(cli, &rows)?;
        Ok(rows)
    });
    match outcome {
        Ok(rows) if all_pass(&rows) => 0,
        Ok(rows) => {
            for r in rows.iter().filter(|r| r.pass() == Some(false)) {
                eprintln!("FAIL {} {} = {:e}", r.experiment, r.quantity, r.value);
            }
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
