use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("homolog has rank {rank} but {needed} independent rows are required")]
    RankDeficientHomolog { rank: usize, needed: usize },

    #[error("basis is empty: 2*pi*c*R = {bound:.6} is below the second root of j_0 (2*pi)")]
    EmptyBasis { bound: f64 },

    #[error("polar quadrature has {have} nodes but degree L = {max_degree} needs at least {need}")]
    QuadratureUnderresolved {
        have: usize,
        need: usize,
        max_degree: usize,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("decomposition failed to converge: {0}")]
    NoConvergence(&'static str),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
