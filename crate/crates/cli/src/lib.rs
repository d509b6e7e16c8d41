//! Pipeline orchestration behind the `ccbm` binary.
//!
//! Each subcommand is a plain function so that tests can drive the same code
//! paths without spawning processes.

pub mod config;
mod enumerate;
mod evaluate;
mod manifest;
mod oracle;
mod predict;
mod run;
pub mod rundir;
mod simulate;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use enumerate::{cmd_enumerate, EnumerateArgs, EnumerationReport, InclusionEntry, SupportEntry};
pub use evaluate::{cmd_eval, EvalArgs, EvalReport};
pub use manifest::{Accounting, RunManifest, RunStatus};
pub use predict::{cmd_predict, PredictArgs, ScoredObservation};
pub use run::{cmd_extract_keyphrases, cmd_run, RunOptions, RunSummary};
pub use simulate::{cmd_simulate, SimulateArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// The oracle failed after retries. The checkpoint, if any, resumes the
    /// run from the start of the failed epoch.
    #[error("oracle failure: {message}")]
    Oracle { message: String, checkpoint: Option<PathBuf> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Oracle { .. } => 3,
            _ => 1,
        }
    }
}
