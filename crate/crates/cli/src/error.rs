use std::path::PathBuf;

use h2market::coalition::CoalitionError;
use h2market::oracle_suite::SuiteError;
use h2market::plant::PlantError;
use h2market::report::ReportError;
use h2market::scenario::ScenarioError;
use h2market::stackelberg::StackelbergError;
use thiserror::Error;

/// A failed run, classified by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl ToString) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn scenario(path: impl Into<PathBuf>, err: ScenarioError) -> Self {
        match err {
            ScenarioError::Io(e) => CliError::io(path, e),
            other => CliError::Validation(format!("{}: {other}", path.into().display())),
        }
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::Solver(_) | PlantError::NotOptimal { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CoalitionError> for CliError {
    fn from(e: CoalitionError) -> Self {
        match e {
            CoalitionError::Plant(p) => p.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<StackelbergError> for CliError {
    fn from(e: StackelbergError) -> Self {
        match e {
            StackelbergError::Plant(p) => p.into(),
            StackelbergError::Coalition(c) => c.into(),
            StackelbergError::NoFeasibleResponse => CliError::Solver(e.to_string()),
            StackelbergError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { path, source } => CliError::io(path, source),
            ReportError::MissingSection(_) => CliError::Validation(e.to_string()),
            other => CliError::io("<export>", other),
        }
    }
}

impl From<SuiteError> for CliError {
    fn from(e: SuiteError) -> Self {
        match e {
            SuiteError::Scenario(s) => CliError::Validation(s.to_string()),
            SuiteError::Plant(p) => p.into(),
            other => CliError::Solver(other.to_string()),
        }
    }
}
