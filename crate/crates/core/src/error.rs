use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pure model functions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("client has no observed ratings")]
    DegenerateClient,
    #[error("aggregation called with no participants")]
    NoParticipants,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),

    /// `client == n` marks the server-side average.
    #[error("divergence at iteration {iter}: client {client} produced a non-finite value")]
    Divergence { client: usize, iter: usize },

    #[error("invalid probability p = {0}; must lie strictly inside (0, 1)")]
    InvalidProbability(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite entry in item matrix passed to the perturbation")]
    NonFiniteInput,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: no ratings found")]
    EmptyFile(PathBuf),

    #[error("evaluation requires a non-empty test set")]
    EmptyTestSet,

    #[error("wrong trainer kind: {0}")]
    WrongTrainerKind(String),

    #[error("no convergence after {iters} iterations (gradient norm {grad_norm:.3e} > {tol:.3e})")]
    NoConvergence { iters: usize, grad_norm: f64, tol: f64 },

    #[error("trajectory has {0} usable points; at least 10 are required")]
    ShortTrajectory(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
