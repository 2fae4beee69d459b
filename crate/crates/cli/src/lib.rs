//! Batch pipeline front end: collect logged data online once, then train,
//! evaluate, and select entirely offline. Exit codes: 0 success, 1 usage
//! error, 2 validation error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod reports;

use orl_core::cql::CqlError;
use orl_core::data::DataError;
use orl_core::ope::OpeError;
use orl_core::selection::SelectionError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> CliError {
        CliError::Usage(format!("{context}: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CqlError> for CliError {
    fn from(e: CqlError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<OpeError> for CliError {
    fn from(e: OpeError) -> Self {
        match e {
            OpeError::DegenerateWeights | OpeError::BadWeights => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::Ope(inner) => inner.into(),
            SelectionError::Cql(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<orl_core::ddqn::DdqnError> for CliError {
    fn from(e: orl_core::ddqn::DdqnError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<orl_core::policy::PolicyError> for CliError {
    fn from(e: orl_core::policy::PolicyError) -> Self {
        CliError::Validation(e.to_string())
    }
}
