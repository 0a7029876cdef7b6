use thiserror::Error;

/// Failures of a subcommand, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or inputs; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Anything that went wrong while doing valid work; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<ffm_core::Error> for CliError {
    fn from(e: ffm_core::Error) -> Self {
        use ffm_core::Error as E;
        match e {
            E::Shape { .. }
            | E::NotPowerOfTwo { .. }
            | E::InvalidArgument(_)
            | E::DegenerateHistogram
            | E::TooSmall { .. } => CliError::Validation(e.to_string()),
            E::NonFinite(_) | E::Diverged { .. } | E::Checkpoint(_) | E::Io { .. } | E::Json { .. } | E::Png { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
