use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature has {nodes} nodes, need at least {required} for truncation order {order}")]
    InsufficientQuadrature {
        nodes: usize,
        required: usize,
        order: usize,
    },

    #[error("no Hermite coefficient with index >= 1 exceeds tolerance {tol:e}")]
    NoNonzeroCoefficient { tol: f64 },

    #[error("series has no mass at or above index {0}")]
    ZeroTail(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("direction is not on the unit sphere (norm {0})")]
    NonUnitDirection(f64),

    #[error("correlation m = {0} is outside [-1, 1]")]
    CorrelationOutOfRange(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("argument ({u}, {v}) outside quadrature range {range}")]
    QuadratureRange { u: f64, v: f64, range: f64 },

    #[error("Gram matrix has eigenvalue {0:e} below tolerance")]
    NegativeEigenvalue(f64),

    #[error("linear system is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("linear system is not positive definite")]
    NotPositiveDefinite,

    #[error("weighted integrand does not decay at the integration boundary (value {0:e})")]
    Divergent(f64),

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence {
        step: usize,
        loss: f64,
        trace: Box<crate::train::TrainTrace>,
    },

    #[error(
        "near-critical point at m = {m} violates both threshold regimes (grad_c {grad_c:e}, grad_theta {grad_theta:e})"
    )]
    TheoryViolation {
        m: f64,
        grad_c: f64,
        grad_theta: f64,
    },

    #[error("dataset stream {found:?} cannot be used here (expected {expected:?})")]
    WrongStream {
        expected: crate::datagen::Stream,
        found: crate::datagen::Stream,
    },

    #[error("missing columns: {0}")]
    MissingColumns(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
