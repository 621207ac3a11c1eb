use thiserror::Error;

use crate::hjb::ResidualReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("invalid claim distribution: {0}")]
    InvalidClaims(String),

    #[error("numerical blow-up at node {node} (x = {x}): value {value}")]
    BlowUp { node: usize, x: f64, value: f64 },

    #[error("classification inconsistency at x = {x}: {reason}")]
    Classification { x: f64, reason: String },

    #[error("no anchor above x = {0}; strategy is malformed")]
    NoAnchorAbove(f64),

    #[error("band construction exceeded {max_bands} bands")]
    MaxBandsExceeded {
        max_bands: usize,
        report: Box<ResidualReport>,
    },

    #[error("certification failed: {reason}")]
    Certification {
        reason: String,
        report: Box<ResidualReport>,
    },

    #[error("value iteration did not converge after {iters} sweeps (last change {change:e})")]
    NonConvergence { iters: usize, change: f64 },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: u64,
        #[source]
        source: Box<Error>,
    },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
