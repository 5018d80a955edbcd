use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("risk index {risk} out of range for Q = {q}")]
    InvalidRisk { risk: usize, q: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no events of risk {risk} in the dataset")]
    NoEvents { risk: usize },

    #[error("zero at-risk denominator at {at}")]
    ZeroAtRisk { at: f64 },

    #[error("cumulative hazard jump {size} at {at} exceeds 1")]
    InvalidHazard { at: f64, size: f64 },

    #[error("non-positive posterior rate for unit {unit}")]
    NonPositiveRate { unit: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("empty at-risk set at v = {v}")]
    EmptyAtRiskSet { v: f64 },

    #[error("IPCW weight undefined: censoring survival is zero at {at}")]
    WeightUndefined { at: f64 },

    #[error("no terminal-event baseline support beyond t = {clock}")]
    NoTerminalSupport { clock: f64 },

    #[error("simulated path exceeded {limit} events")]
    RunawayPath { limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidRisk { .. }
                | Error::DimensionMismatch { .. }
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
