//! Library behind the `cyclotest` and `iron-sut` binaries.

pub mod campaign;
pub mod report;
pub mod setup;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const PROTOCOL: i32 = 3;
    pub const VERDICT: i32 = 4;
    pub const COVERAGE: i32 = 5;
}

/// Name of the environment variable holding the log filter.
pub const LOG_ENV: &str = "CYCLOTEST_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable model, syntax error or error diagnostic; already rendered.
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) | Self::Usage(_) => exit::PARSE,
            Self::Protocol(_) => exit::PROTOCOL,
            Self::Io(_) => exit::OTHER,
        }
    }
}

/// Logs go to stderr; the filter comes from `CYCLOTEST_LOG`, `warn` by
/// default.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
