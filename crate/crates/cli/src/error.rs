use std::path::PathBuf;

use thiserror::Error;
use tvgraph::devlab::DevlabError;
use tvgraph::glasso::GlassoError;
use tvgraph::kernel::KernelError;
use tvgraph::matrix::MatrixError;
use tvgraph::risk::RiskError;
use tvgraph::simgen::io::FormatError;
use tvgraph::simgen::SimgenError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    /// Outputs were written from the best iterate, flagged as not converged.
    #[error("solver did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } | CliError::Input { .. } => EXIT_IO,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn input(path: impl Into<PathBuf>, err: FormatError) -> Self {
        let path = path.into();
        match err {
            FormatError::Io(source) => CliError::Io { path, source },
            other => CliError::Input {
                path,
                message: other.to_string(),
            },
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::EmptyWindow { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GlassoError> for CliError {
    fn from(e: GlassoError) -> Self {
        match e {
            GlassoError::InvalidPenalty(_) | GlassoError::UnsortedPath => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimgenError> for CliError {
    fn from(e: SimgenError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::Glasso(g) => g.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<DevlabError> for CliError {
    fn from(e: DevlabError) -> Self {
        match e {
            DevlabError::OutOfDomain { .. } | DevlabError::InvalidConfig(_) => CliError::Config(e.to_string()),
            DevlabError::Kernel(k) => k.into(),
            DevlabError::Matrix(m) => m.into(),
            DevlabError::Simgen(s) => s.into(),
            DevlabError::Glasso(g) => g.into(),
        }
    }
}
