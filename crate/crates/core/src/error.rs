use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid unit `{unit}`: {reason}")]
    InvalidUnit { unit: String, reason: String },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid scenario `{label}`: {reason}")]
    InvalidScenario { label: String, reason: String },

    #[error("period {t} out of range for horizon of {n_periods} periods")]
    PeriodOutOfRange { t: usize, n_periods: usize },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("screening called off schedule: {0}")]
    Schedule(String),

    #[error("{}: {msg}", path.display())]
    Ingest { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidUnit { .. } => "invalid_unit",
            Error::InvalidSystem(_) => "invalid_system",
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidScenario { .. } => "invalid_scenario",
            Error::PeriodOutOfRange { .. } => "period_out_of_range",
            Error::Fit(_) => "fit",
            Error::Shape(_) => "shape",
            Error::Schedule(_) => "schedule",
            Error::Ingest { .. } => "ingest",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
