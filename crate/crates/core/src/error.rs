use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in {table}: {detail}")]
    Schema { table: String, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate censoring support: {0}")]
    DegenerateSupport(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, printed by the CLI on failure.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "E_SCHEMA",
            Error::EmptyInput(_) => "E_EMPTY_INPUT",
            Error::Argument(_) => "E_ARGUMENT",
            Error::Training(_) => "E_TRAINING",
            Error::NonConvergence { .. } => "E_NON_CONVERGENCE",
            Error::Calibration(_) => "E_CALIBRATION",
            Error::UndefinedMetric(_) => "E_UNDEFINED_METRIC",
            Error::Contract(_) => "E_CONTRACT",
            Error::DegenerateSupport(_) => "E_DEGENERATE_SUPPORT",
            Error::Config(_) => "E_CONFIG",
            Error::Io { .. } => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
        }
    }

    pub(crate) fn schema(table: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema {
            table: table.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
