//! Case runner for the `reset-shaping` library: declarative case configs,
//! the shipped presets and the analysis/simulation commands behind `rshape`.

pub mod commands;
pub mod config;
pub mod plot;

use thiserror::Error;

pub use commands::{run_command, Command, CommandReport, Overrides};
pub use config::{load_preset, presets_dir, BuiltCase, CaseConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}{source}", prefix(.case))]
    Module {
        case: String,
        #[source]
        source: reset_shaping::Error,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("plot error: {0}")]
    Plot(String),
}

fn prefix(case: &str) -> String {
    if case.is_empty() {
        String::new()
    } else {
        format!("case {case}: ")
    }
}

impl From<reset_shaping::Error> for CliError {
    fn from(source: reset_shaping::Error) -> Self {
        CliError::Module { case: String::new(), source }
    }
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
