use std::path::PathBuf;

/// Errors produced by the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not reach tolerance: value {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("value {target:e} is outside the bracket reachable after {expansions} expansions")]
    Bracket { target: f64, expansions: usize },

    #[error("inadmissible delta schedule: beta did not decrease at step {step} ({prev} -> {next})")]
    InadmissibleSchedule { step: usize, prev: f64, next: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("not converged after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("insufficient converged records: {got} < {needed}")]
    InsufficientRecords { got: usize, needed: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("cannot write to {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
