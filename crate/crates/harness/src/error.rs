use ldplab_core::LdpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("load error at row {row}: {message}")]
    Load { row: usize, message: String },

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("infeasible budget: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Core(#[from] LdpError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn load(row: usize, message: impl Into<String>) -> Self {
        HarnessError::Load {
            row,
            message: message.into(),
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvalidSpec(_) => 2,
            HarnessError::Core(LdpError::InvalidParameter(_)) => 2,
            HarnessError::Load { .. } | HarnessError::Csv(_) | HarnessError::Io(_) => 3,
            HarnessError::Infeasible(_) | HarnessError::Core(LdpError::Infeasible { .. }) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
