use asc_core::ErrorKind;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: asc_core::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core { source, .. } => match source.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numeric => EXIT_NUMERIC,
            },
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach what the command was doing to a library error.
pub trait Context<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for asc_core::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Core {
            context: context(),
            source,
        })
    }
}
