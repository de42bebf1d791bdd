//! Command-line harness for the `stokes_regularity` library: verification
//! suites for each subsystem and the refinement sweep of the pressure
//! estimate, reported as CSV.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manufactured;
pub mod report;

pub use cli::{run, Cli, Command};
pub use config::Config;
pub use error::{HarnessError, Result};
pub use report::{Check, ReportRow};
