//! Crate-wide error type.

/// Errors raised by dataset ingestion, model fitting, and estimation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input row; `line` is 1-based including the header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally invalid data (schema or invariant violation).
    #[error("schema error: {0}")]
    Schema(String),

    /// Not enough rows for the requested fit or split.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A classifier was asked to separate a single class.
    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    /// Argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The estimating equation had no admissible root.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// Interval inversion produced the empty set.
    #[error("empty interval: no outcome value satisfies the score threshold")]
    EmptyInterval,

    /// Error wrapped with the pipeline stage that produced it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Extension to tag a `Result` with its pipeline stage.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
