//! Command implementations behind the `tie-auction` binary.
//!
//! Every command returns a [`RunReport`]; the binary prints it as JSON and maps errors
//! to exit codes with [`CliError::exit_code`].

pub mod commands;
pub mod schema;
pub mod verify;

use serde::Serialize;
use tie_auction::Error;

pub use commands::{run, Command, Options};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Budget(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub(crate) fn field(field: &str, e: Error) -> Self {
        CliError::from(e).context(field)
    }

    pub fn context(self, ctx: &str) -> Self {
        match self {
            CliError::Validation(s) => CliError::Validation(format!("{ctx}: {s}")),
            CliError::Io(s) => CliError::Io(format!("{ctx}: {s}")),
            CliError::Verification(s) => CliError::Verification(format!("{ctx}: {s}")),
            CliError::Budget(s) => CliError::Budget(format!("{ctx}: {s}")),
            CliError::Internal(s) => CliError::Internal(format!("{ctx}: {s}")),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => EXIT_VALIDATION,
            CliError::Verification(_) | CliError::Internal(_) => EXIT_VERIFICATION,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Budget { .. } => CliError::Budget(e.to_string()),
            Error::Internal(_) => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

/// Output of one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub config: commands::ConfigEcho,
    /// Deterministic given the command, its flags, the seed and the input files.
    pub result: serde_json::Value,
    pub wall_time_seconds: f64,
    /// Whether every check passed (always true except for `verify` and `hardness`).
    pub passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// The result payload alone, as compact JSON.
    pub fn payload_json(&self) -> String {
        serde_json::to_string(&self.result).expect("payloads serialize")
    }
}
