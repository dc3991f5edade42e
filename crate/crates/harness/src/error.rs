use etalab_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot read config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("sum rule violated at t = {t}: {rule} off by {error:e}")]
    SumRule { t: f64, rule: &'static str, error: f64 },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 validation, 3 capacity, 4 numerical
    /// instability, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } | Self::Parse(_) => 2,
            Self::Core(e) => match e {
                CoreError::Domain(_) | CoreError::Shape(_) | CoreError::Boundary { .. } => 2,
                CoreError::Capacity { .. } => 3,
                CoreError::Convergence { .. }
                | CoreError::Instability(_)
                | CoreError::StepSize(_)
                | CoreError::Solver { .. }
                | CoreError::DegenerateProjection { .. }
                | CoreError::NoJumpChannel { .. } => 4,
            },
            Self::SumRule { .. } => 4,
            Self::Csv(_) | Self::Io { .. } => 1,
        }
    }
}
