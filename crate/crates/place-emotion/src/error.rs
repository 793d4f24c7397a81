use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no cluster at site {site_id} produced a polygon (data too sparse at given parameters)")]
    EmptyPlace { site_id: String },

    #[error("no faces available for site {site_id}")]
    NoFaces { site_id: String },

    #[error("empty sample")]
    NoData,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient design matrix; offending columns: {columns:?}")]
    SingularDesign { columns: Vec<String> },

    #[error("schema error: {0}")]
    SchemaError(String),

    #[error("ingest aborted: {rejected} of {total} rows rejected (limit {limit_pct:.1}%)")]
    IngestAborted {
        rejected: usize,
        total: usize,
        limit_pct: f64,
    },

    #[error("scoring aborted: {failed} of {total} photos failed")]
    ScoringAborted { failed: usize, total: usize },

    #[error("no site survived the study")]
    StudyFailed,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
