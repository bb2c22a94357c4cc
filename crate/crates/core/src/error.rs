use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {requested} layers requested but only C({resources},{nonzeros}) = {available} supports exist")]
    Capacity {
        requested: usize,
        available: usize,
        resources: usize,
        nonzeros: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("index {index} out of range for {context} (limit {limit})")]
    OutOfRange {
        context: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("missing data bits for active user {0}")]
    MissingBits(usize),
    #[error("cache was produced by parameter generation {cached}, parameters are now at generation {current}")]
    StaleCache { cached: u64, current: u64 },
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("undefined quantity: {0}")]
    Undefined(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
