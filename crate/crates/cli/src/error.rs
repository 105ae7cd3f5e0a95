use mosco_lab::LabError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error(transparent)]
    Lab(#[from] LabError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Lab(e) => match e {
                LabError::Invariant { .. } | LabError::Exhaustion { .. } => EXIT_INVARIANT,
                LabError::Io(_) => EXIT_IO,
                LabError::Csv(c) if c.is_io_error() => EXIT_IO,
                _ => EXIT_CONFIG,
            },
        }
    }

    pub fn record(&self) -> FailureRecord {
        let (kind, module, margin) = match self {
            CliError::Config(_) => ("config", None, None),
            CliError::Io(_) => ("io", None, None),
            CliError::Lab(e) => match e {
                LabError::Invariant { module, margin, .. } => {
                    ("invariant", Some(*module), Some(*margin))
                }
                LabError::Exhaustion { best_gap, .. } => ("exhaustion", None, Some(*best_gap)),
                LabError::Monotonicity { .. } => ("monotonicity", Some("metric_core"), None),
                LabError::Io(_) => ("io", None, None),
                _ => ("input", None, None),
            },
        };
        FailureRecord {
            kind,
            module,
            margin,
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

/// Machine-readable description of a failed run, written as `failure.json`.
#[derive(Clone, Debug, Serialize)]
pub struct FailureRecord {
    pub kind: &'static str,
    pub module: Option<&'static str>,
    pub margin: Option<f64>,
    pub message: String,
    pub exit_code: i32,
}
