use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ri_interp::Error> for CliError {
    fn from(err: ri_interp::Error) -> Self {
        use ri_interp::Error as E;
        match err {
            E::Io { path, source } => CliError::Io { path, source },
            E::DegenerateLogDensity
            | E::NonFiniteLogLikelihood { .. }
            | E::NonFiniteEnergy { .. }
            | E::DegenerateProjection => CliError::Numeric(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
