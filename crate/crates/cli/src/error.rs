use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical error in {module}: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: space_split::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed checks: {0}")]
    ChecksFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } | CliError::ChecksFailed(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    /// Sorts a library error into a configuration or a numerical failure.
    pub fn from_core(module: &'static str, e: space_split::Error) -> Self {
        use space_split::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::InsufficientData(_) => {
                CliError::Config(e.to_string())
            }
            source => CliError::Numerical { module, source },
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
