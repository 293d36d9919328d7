use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("invalid bounds for dimension {dim}: lo={lo}, hi={hi}")]
    Bounds { dim: usize, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("cannot stratify: {0}")]
    Stratify(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("metric `{0}` is undefined (zero denominator)")]
    UndefinedMetric(&'static str),

    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    #[error("scaler statistics {found} do not match the model's {expected}")]
    ScalerMismatch { expected: String, found: String },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("fitness evaluation failed at {position:?}: {source}")]
    Fitness {
        position: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
