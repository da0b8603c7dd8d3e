use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} must be odd (got {value}); set grid = \"centered\" to allow even counts")]
    EvenCount { name: &'static str, value: usize },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("IRS center must not coincide with the BS origin")]
    DegenerateCenter,

    #[error("user {0} coincides with the IRS center")]
    CoincidentUser(usize),

    #[error("invalid deployment request: {0}")]
    Deployment(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("noise power must be positive (got {0})")]
    NonPositiveNoise(f64),

    #[error("argument is a zero vector or matrix")]
    ZeroInput,

    #[error("{0} is not a perfect square")]
    NotSquare(usize),

    #[error("degenerate subproblem: {0}")]
    Degenerate(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("linear system is not positive definite; the ADMM penalty is likely misconfigured")]
    NotPositiveDefinite,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
