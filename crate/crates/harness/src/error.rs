use thiserror::Error;

use stokes_regularity::Error as CoreError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for HarnessError {
    /// Errors that a configuration can provoke map to `Config`; numerical
    /// failures map to `Solver`.
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(_)
            | CoreError::UnsupportedShape(_)
            | CoreError::GridTooCoarse(_)
            | CoreError::NoAdmissibleRadius { .. }
            | CoreError::UndefinedRatio(_)
            | CoreError::EmptyRegion(_) => HarnessError::Config(e.to_string()),
            other => HarnessError::Solver(other),
        }
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Solver(_) | HarnessError::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
