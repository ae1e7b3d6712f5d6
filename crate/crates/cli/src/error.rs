use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("difference {max:e} exceeds tolerance {tolerance:e}")]
    OverTolerance { max: f64, tolerance: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
            CliError::Io(_) | CliError::OverTolerance { .. } => ExitCode::from(1),
        }
    }
}

pub fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

pub fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}
