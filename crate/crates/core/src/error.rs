use thiserror::Error;

/// Errors produced by model construction, estimation, fitting and ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural model violates an invariant (cycle, bad weight, unknown node, ...).
    #[error("invalid model: {0}")]
    Model(String),

    /// An argument is outside its contract.
    #[error("invalid input: {0}")]
    Input(String),

    /// Maximum-likelihood fitting could not produce a usable result.
    #[error("fit failed: {0}")]
    Fit(String),

    /// A data file could not be ingested.
    #[error("ingestion error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
