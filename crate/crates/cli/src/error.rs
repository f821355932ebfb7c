use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    #[error("{0}")]
    Usage(String),

    /// Input data unusable; exit code 2.
    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] turbine_states::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}
