use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("unknown point id {id} (space has {len} points)")]
    Lookup { id: usize, len: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("tensor generator error: {0}")]
    Generator(String),

    /// An edge weight decreased along the penalty schedule.
    #[error("edge ({from}, {to}) weight decreases from level {level} ({before}) to level {next} ({after})")]
    Monotonicity {
        from: usize,
        to: usize,
        level: usize,
        next: usize,
        before: f64,
        after: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A property that must hold by construction did not; `margin` is the signed amount
    /// by which the inequality failed.
    #[error("invariant failure in {module}: {detail} (margin {margin:e})")]
    Invariant {
        module: &'static str,
        detail: String,
        margin: f64,
    },

    /// No level of a finite family meets the requested tolerance.
    #[error(
        "no level reaches tolerance {tolerance:e}; best level {best_level} with gap {best_gap:e}"
    )]
    Exhaustion {
        best_level: usize,
        best_gap: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn invariant(module: &'static str, detail: impl Into<String>, margin: f64) -> Self {
        LabError::Invariant {
            module,
            detail: detail.into(),
            margin,
        }
    }
}
