use serde_json::json;

use csocnn_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

fn core_kind(e: &CoreError) -> (&'static str, i32) {
    match e {
        CoreError::Config(_) | CoreError::Bounds { .. } => ("config", EXIT_USAGE),
        CoreError::Schema(_) => ("schema", EXIT_FORMAT),
        CoreError::Parse { .. } => ("parse", EXIT_FORMAT),
        CoreError::Label { .. } => ("label", EXIT_FORMAT),
        CoreError::Stratify(_) => ("stratify", EXIT_FORMAT),
        CoreError::ModelFormat(_) => ("model_format", EXIT_FORMAT),
        CoreError::ScalerMismatch { .. } => ("scaler_mismatch", EXIT_FORMAT),
        CoreError::Csv(_) => ("csv", EXIT_FORMAT),
        CoreError::Json(_) => ("json", EXIT_FORMAT),
        CoreError::TrainingDiverged { .. } => ("training_diverged", EXIT_NUMERIC),
        CoreError::UndefinedMetric(_) => ("undefined_metric", EXIT_NUMERIC),
        CoreError::DegenerateClass(_) => ("degenerate_class", EXIT_NUMERIC),
        CoreError::Fitness { source, .. } => core_kind(source),
        CoreError::Io { .. } => ("io", EXIT_OTHER),
        CoreError::Shape(_) => ("shape", EXIT_OTHER),
        CoreError::State(_) => ("state", EXIT_OTHER),
    }
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_string(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => core_kind(e).0,
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => core_kind(e).1,
            CliError::Io { .. } => EXIT_OTHER,
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(CoreError::ScalerMismatch { .. }) => {
                Some("pass --scaler with the scaler.json written by the run that produced the model")
            }
            CliError::Core(CoreError::ModelFormat(_)) => Some("the model file is damaged or not a csocnn model; retrain or restore it"),
            CliError::Core(CoreError::TrainingDiverged { .. }) => Some("lower --lr or check the input data for extreme values"),
            _ => None,
        }
    }

    /// One-line JSON error record for stderr and manifests.
    pub fn record(&self) -> serde_json::Value {
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
                "hint": self.hint(),
            }
        })
    }
}
