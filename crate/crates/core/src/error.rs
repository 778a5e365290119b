use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    /// The no-transmission event lost (almost) all of its probability mass.
    #[error("degenerate policy at stage {stage} of sub-problem {sub_problem}: survival {survival:.3e}")]
    Degenerate {
        sub_problem: usize,
        stage: usize,
        survival: f64,
    },

    #[error("estimate bound violated at stage {stage} of sub-problem {sub_problem}: |x̂| = {distance:.4} > {bound:.4}")]
    UnboundedEstimate {
        sub_problem: usize,
        stage: usize,
        distance: f64,
        bound: f64,
    },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("scheme assembly failed: {0}")]
    Assembly(String),

    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("bad scheme file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// I/O failure annotated with the file involved.
pub(crate) fn io_at(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
