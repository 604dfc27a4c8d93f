use thiserror::Error;

/// CLI failures with stable machine-readable codes. On failure the binary
/// prints `{"code": ..., "message": ...}` to stderr and exits nonzero.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Estimate(#[from] netrdd::Error),
    #[error("effect {label}: {source}")]
    EffectFailed { label: String, source: netrdd::Error },
    #[error("{0}")]
    Simulate(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io(_) => "E_IO",
            CliError::Csv(_) => "E_CSV",
            CliError::Schema(_) => "E_SCHEMA",
            CliError::Config(_) => "E_CONFIG",
            CliError::Estimate(_) | CliError::EffectFailed { .. } => "E_ESTIMATE",
            CliError::Simulate(_) => "E_SIMULATE",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
