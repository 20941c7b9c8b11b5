use thiserror::Error;

/// Failures mapped onto process exit codes: 1 for failed runs or
/// comparisons, 2 for usage and configuration errors.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn failed(msg: impl Into<String>) -> Self {
        CliError::Failed(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<spc_core::Error> for CliError {
    fn from(e: spc_core::Error) -> Self {
        use spc_core::Error as E;
        match e {
            E::InvariantViolation { .. } | E::TooManyAborts { .. } | E::GeometryCollapse { .. } | E::ExtractionWindow { .. } => {
                CliError::Failed(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failed(format!("csv error: {e}"))
    }
}
