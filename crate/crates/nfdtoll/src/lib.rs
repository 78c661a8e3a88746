//! Configuration, artifact formats and subcommands of the `nfdtoll` command
//! line tool. The numerics live in `nfdtoll-core`.

pub mod commands;
pub mod config;
pub mod output;

/// Exit status 2 for usage and configuration errors, 1 for runtime and
/// numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn map_message(self, f: impl FnOnce(String) -> String) -> CliError {
        match self {
            CliError::Usage(m) => CliError::Usage(f(m)),
            CliError::Runtime(m) => CliError::Runtime(f(m)),
        }
    }
}

impl From<nfdtoll_core::Error> for CliError {
    fn from(e: nfdtoll_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
