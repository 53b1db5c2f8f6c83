use riccati_lab::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, config or input files.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for anything the user can fix in the inputs, 1 for numerical
    /// failures of a well-formed run.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Write { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::HorizonMismatch(_)
                | CoreError::Parse(_)
                | CoreError::InvalidArgument(_)
                | CoreError::Dimension(_)
                | CoreError::GridMismatch(_)
                | CoreError::Io(_)
                | CoreError::NonFinite(_)
                | CoreError::Unstable { .. } => 2,
                _ => 1,
            },
        }
    }
}
