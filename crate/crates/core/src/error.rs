use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the tracking stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported primitive `{0}` in differentiable field")]
    Unsupported(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("degenerate chart: {0}")]
    DegenerateChart(String),
    #[error("degenerate metric: det = {0:e}")]
    DegenerateMetric(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("rank deficient configuration: {0}")]
    Rank(String),
    #[error("render error at gaussian {index}: {reason}")]
    Render { index: usize, reason: String },
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Image(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), reason: reason.into() }
    }
}
