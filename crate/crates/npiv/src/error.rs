use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] npiv_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid column roles: {0}")]
    Roles(String),
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("no runs found in {0}")]
    NoRuns(PathBuf),
    #[error("missing run artifacts:\n  {}", .0.join("\n  "))]
    MissingArtifacts(Vec<String>),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Csv {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
