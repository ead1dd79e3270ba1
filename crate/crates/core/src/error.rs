use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coefficient evaluation failed at state {state:?}: {what}")]
    Evaluation { state: Vec<f64>, what: String },

    #[error("coefficient shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("integration diverged at step {step} (t = {time}): non-finite state")]
    Divergence { step: usize, time: f64 },

    #[error("degenerate chart at {theta:?}: metric condition number {condition:e}")]
    DegenerateChart { theta: Vec<f64>, condition: f64 },

    #[error("metric projection did not converge from {start:?} (point outside the tubular neighborhood?)")]
    OutsideTubularNeighborhood { start: Vec<f64> },

    #[error("parameter {theta:?} outside the family (scale must be positive)")]
    Boundary { theta: Vec<f64> },

    #[error("degenerate family geometry at {theta:?}")]
    DegenerateFamily { theta: Vec<f64> },

    #[error("density normalization off by {drift:e}; renormalize first")]
    RenormalizationRequired { drift: f64 },

    #[error("reference solver failure: {0}")]
    Solver(String),

    #[error("grid domain too small: boundary value {value:e}")]
    DomainTooSmall { value: f64 },

    #[error("order probe invalid: {exits} of {trials} paths left the tubular neighborhood")]
    ProbeInvalid { exits: usize, trials: usize },

    #[error("log-log fit rejected: {0}")]
    DegenerateFit(String),

    #[error("formula consistency check failed: {0}")]
    FormulaConsistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Configuration errors map to a distinct CLI exit code from numerical ones.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
