use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside its documented range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Source and sink (or root and boundary) are not connected.
    #[error("topology error: {0}")]
    Topology(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("cannot allocate {required_bytes} bytes for {what}")]
    Resource { what: String, required_bytes: u64 },

    #[error("format error: {0}")]
    Format(String),

    /// An internal invariant was violated; indicates a bug in a builder.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// The experiment touched vertices whose neighbourhood is truncated by the window.
    #[error("experiment validity error: {0}")]
    Contaminated(String),

    #[error("truncation bound {achieved:e} exceeds requested accuracy {requested:e}")]
    Accuracy { achieved: f64, requested: f64 },

    #[error("brute-force oracle refuses {vertices} vertices (cap {cap})")]
    OracleCap { vertices: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
