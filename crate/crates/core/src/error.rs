use std::path::PathBuf;

/// Errors raised by the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("observation Gram matrix is singular (condition number {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("reconstruction is ill-posed: beta = {beta:.3e} is below the floor {floor:.3e}")]
    IllPosed { beta: f64, floor: f64 },

    #[error("parameter ({0}, {1}) lies outside the parameter box")]
    OutOfBox(f64, f64),

    #[error("Newton failed at step {step}: residual {residual:.3e} after {iterations} iterations")]
    NewtonFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("rank deficiency: requested rank {requested}, effective rank {effective}")]
    RankDeficient { requested: usize, effective: usize },

    #[error("coefficient Gram matrix S collapsed (trace {trace:.3e}); try a smaller rank")]
    RankCollapse { trace: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
