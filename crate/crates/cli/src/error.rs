use std::process::ExitCode;

use stabsim::config::ConfigError;
use stabsim::engine::EngineError;
use stabsim::qlearning::QError;
use stabsim::smg::SmgError;
use stabsim::workload::WorkloadError;
use thiserror::Error;

/// Failure classes with stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::NonConvergence(_) => 4,
        })
    }
}

fn csv_class(e: &csv::Error) -> fn(String) -> CliError {
    if e.is_io_error() {
        CliError::Io
    } else {
        CliError::Validation
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<QError> for CliError {
    fn from(e: QError) -> Self {
        match &e {
            QError::Io(_) => CliError::Io(e.to_string()),
            QError::Csv(c) => csv_class(c)(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SmgError> for CliError {
    fn from(e: SmgError) -> Self {
        match &e {
            SmgError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            SmgError::Io(_) => CliError::Io(e.to_string()),
            SmgError::Csv(c) => csv_class(c)(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Game(g) => g.into(),
            EngineError::QLearning(q) => q.into(),
            EngineError::Io(_) => CliError::Io(e.to_string()),
            EngineError::Csv(ref c) => csv_class(c)(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
