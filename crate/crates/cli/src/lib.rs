//! Command-line front end: scenario and settings documents, the subcommands,
//! and CSV/SVG persistence.

use std::ffi::OsString;
use std::fmt;

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod scenario;
pub mod svg;

pub use config::RunConfig;
pub use scenario::{parse_scenario, ScenarioError, ScenarioFile};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, documents or input files.
    Input(String),
    /// Solver breakdown or other numerical failure.
    Numerical(String),
    /// Results could not be written.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::Numerical(_) | Self::Output(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) => write!(f, "input error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        Self::Input(e.to_string())
    }
}

fn is_numerical(e: &sensoralloc::Error) -> bool {
    use sensoralloc::Error as E;
    match e {
        E::NotPositiveDefinite { .. } | E::Diverged { .. } | E::InnerBreakdown { .. } | E::NonFinite(_) => true,
        E::Sample { source, .. } => is_numerical(source),
        _ => false,
    }
}

impl From<sensoralloc::Error> for CliError {
    fn from(e: sensoralloc::Error) -> Self {
        if is_numerical(&e) {
            Self::Numerical(e.to_string())
        } else {
            Self::Input(e.to_string())
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    use clap::Parser;
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sensoralloc: {e}");
            e.exit_code()
        }
    }
}
