use thiserror::Error;

use crate::sigma::SigmaFieldCheck;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("inverse iteration did not converge after {iterations} iterations (last eigenvalue estimate {value})")]
    EigenNotConverged {
        value: f64,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("component {component} vanished before renormalization at t = {t}")]
    DegenerateComponent { component: usize, t: f64 },

    #[error("stage {stage} (epsilon = {epsilon}): {source}")]
    Stage {
        stage: usize,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate probe: H = {h:e} is below the cutoff {cutoff:e} at R = {radius}")]
    DegenerateProbe { h: f64, cutoff: f64, radius: f64 },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("initial data rejected: {}", .0.describe())]
    InvalidInitial(SigmaFieldCheck),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
