use sigexec_core::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("invariant check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numerical failures, 4 when the
    /// simulation disagrees with the solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(ModelError::InvalidParameter { .. } | ModelError::PolicyFormat(_)) => 2,
            CliError::Model(_) | CliError::Check(_) => 3,
            CliError::Consistency(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}
