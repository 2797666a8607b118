//! Library side of the `cmms` binary: configuration, run pipeline, selftest.

pub mod config;
pub mod run;
pub mod selftest;

pub use config::{parse_config, Cli, Command, FileConfig, Mode, RunArgs, RunConfig};
pub use run::{execute, preprocess, write_outputs, RunOutcome};

use cmms::CmmsError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("selftest failed: {0}")]
    Selftest(String),
}

impl CliError {
    /// Process exit code; 2 is shared with argument parsing errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
            CliError::Solver(_) => 5,
            CliError::Selftest(_) => 6,
        }
    }
}

impl From<CmmsError> for CliError {
    fn from(e: CmmsError) -> Self {
        match e {
            CmmsError::Io { .. } | CmmsError::Report(_) => CliError::Io(e.to_string()),
            CmmsError::Parse { .. } | CmmsError::InvalidInput(_) | CmmsError::DimensionMismatch(_) => {
                CliError::Data(e.to_string())
            }
            CmmsError::NotPositiveDefinite(_) | CmmsError::NotSymmetric(_) => CliError::Solver(e.to_string()),
        }
    }
}
