use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shadowing covariance is not positive definite after {attempts} jitter attempts")]
    Factorization { attempts: usize },

    #[error("solver produced a non-finite value at iteration {iteration} ({what})")]
    NonFinite {
        iteration: usize,
        what: &'static str,
        trace: Vec<crate::apg::TraceEntry>,
    },

    #[error("oracle refused: {0}")]
    Oracle(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
