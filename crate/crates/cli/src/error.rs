use std::path::PathBuf;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Ingest { path: PathBuf, row: Option<usize>, column: Option<String>, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] provconf_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Ingest { .. } => "ingest",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.kind(),
            CliError::Json(_) => "json",
            CliError::Csv(_) => "csv",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// One-line JSON record for standard error.
    pub fn record(&self) -> String {
        let mut rec = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::Ingest { row, column, .. } = self {
            rec["row"] = serde_json::json!(row);
            rec["column"] = serde_json::json!(column);
        }
        rec.to_string()
    }
}
