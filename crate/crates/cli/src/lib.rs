//! Experiment runner: dataset generation, the CL/FL training matrix,
//! gradient-inversion attacks on recorded updates, and report emission.

pub mod commands;
pub mod config;
pub mod plot;
pub mod table;

use std::fmt;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 2,
    MissingInput = 3,
    Runtime = 4,
    /// Finished, but some inputs were skipped.
    Partial = 5,
}

/// An error tagged with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure { exit: Exit::Config, error: error.into() }
    }

    pub fn missing(error: impl Into<anyhow::Error>) -> Self {
        Failure { exit: Exit::MissingInput, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { exit: Exit::Runtime, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Failure {}

pub type CliResult<T> = Result<T, Failure>;

/// Attach an exit code to any fallible call.
pub trait OrExit<T> {
    fn or_exit(self, exit: Exit) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, exit: Exit) -> CliResult<T> {
        self.map_err(|e| Failure { exit, error: e.into() })
    }
}
